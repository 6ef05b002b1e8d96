use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_rational::Rational64;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{check_outcome, ConditionalModel, InputToken, ModelKind, Outcome, OutcomeSpace, Payload};
use crate::error::{Error, Result};

/// A univariate normal density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: f64,
    pub sigma: f64,
}

impl Gaussian {
    pub fn new(mean: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || !mean.is_finite() {
            return Err(Error::InvalidModel(format!(
                "gaussian needs finite mean and positive sigma, got ({mean}, {sigma})"
            )));
        }
        Ok(Self { mean, sigma })
    }

    /// Peak value `1/√(2πσ²)`.
    pub fn peak(&self) -> f64 {
        1.0 / (2.0 * PI * self.sigma * self.sigma).sqrt()
    }

    #[inline]
    pub fn ln_pdf(&self, y: f64) -> f64 {
        let z = (y - self.mean) / self.sigma;
        -0.5 * z * z - self.sigma.ln() - 0.5 * (2.0 * PI).ln()
    }

    #[inline]
    pub fn pdf(&self, y: f64) -> f64 {
        self.ln_pdf(y).exp()
    }
}

type MeanClosure = dyn Fn(&InputToken) -> Result<f64> + Send + Sync;

/// The regression function `f(x)` of a Gaussian model.
#[derive(Clone)]
pub enum MeanFn {
    /// `x ↦ a·x + b` over scalar payloads, with exact rational coefficients.
    Linear {
        slope: Rational64,
        intercept: Rational64,
    },
    Custom(Arc<MeanClosure>),
}

impl fmt::Debug for MeanFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeanFn::Linear { slope, intercept } => write!(f, "Linear({slope}·x + {intercept})"),
            MeanFn::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// `ν(y|x) = φ_{σ²}(y − f(x))` with `σ` at or above the class floor.
#[derive(Debug, Clone)]
pub struct GaussianRegressionModel {
    mean_fn: MeanFn,
    slope: f64,
    intercept: f64,
    sigma: f64,
}

impl GaussianRegressionModel {
    pub fn linear(slope: Rational64, intercept: Rational64, sigma: f64, sigma_floor: f64) -> Result<Self> {
        check_sigma(sigma, sigma_floor)?;
        Ok(Self {
            slope: ratio_to_f64(slope),
            intercept: ratio_to_f64(intercept),
            mean_fn: MeanFn::Linear { slope, intercept },
            sigma,
        })
    }

    pub fn with_mean_fn<F>(mean_fn: F, sigma: f64, sigma_floor: f64) -> Result<Self>
    where
        F: Fn(&InputToken) -> Result<f64> + Send + Sync + 'static,
    {
        check_sigma(sigma, sigma_floor)?;
        Ok(Self {
            mean_fn: MeanFn::Custom(Arc::new(mean_fn)),
            slope: f64::NAN,
            intercept: f64::NAN,
            sigma,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mean_fn(&self) -> &MeanFn {
        &self.mean_fn
    }

    pub fn mean_at(&self, x: &InputToken) -> Result<f64> {
        let m = match &self.mean_fn {
            MeanFn::Linear { .. } => match x.payload {
                Payload::Scalar(v) => self.slope * v + self.intercept,
                ref other => {
                    return Err(Error::PayloadMismatch {
                        expected: "scalar",
                        got: other.kind_name(),
                    })
                }
            },
            MeanFn::Custom(f) => f(x)?,
        };
        if !m.is_finite() {
            return Err(Error::InvalidModel(format!("regression function returned {m}")));
        }
        Ok(m)
    }

    fn normal_at(&self, x: &InputToken) -> Result<Gaussian> {
        Ok(Gaussian {
            mean: self.mean_at(x)?,
            sigma: self.sigma,
        })
    }
}

fn check_sigma(sigma: f64, floor: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= floor && sigma > 0.0) {
        return Err(Error::SigmaBelowFloor { sigma, floor });
    }
    Ok(())
}

pub(crate) fn ratio_to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl ConditionalModel for GaussianRegressionModel {
    fn kind(&self) -> ModelKind {
        ModelKind::GaussianRegression
    }

    fn outcome_space(&self) -> OutcomeSpace {
        OutcomeSpace::Real
    }

    fn density_bound(&self) -> f64 {
        1.0 / (2.0 * PI * self.sigma * self.sigma).sqrt()
    }

    fn log_density(&self, x: &InputToken, y: Outcome) -> Result<f64> {
        check_outcome(y)?;
        let y = match y {
            Outcome::Real(v) => v,
            other => {
                return Err(Error::OutcomeMismatch {
                    expected: "real",
                    got: other.kind_name(),
                })
            }
        };
        Ok(self.normal_at(x)?.ln_pdf(y))
    }

    fn sample(&self, x: &InputToken, rng: &mut dyn RngCore) -> Result<Outcome> {
        let g = self.normal_at(x)?;
        let z: f64 = StandardNormal.sample(rng);
        Ok(Outcome::Real(g.mean + g.sigma * z))
    }

    fn gaussian(&self, x: &InputToken) -> Result<Option<Gaussian>> {
        self.normal_at(x).map(Some)
    }

    fn constant_sigma(&self) -> Option<f64> {
        Some(self.sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_floor_is_enforced() {
        let zero = Rational64::from_integer(0);
        let err = GaussianRegressionModel::linear(zero, zero, 1e-7, 1e-6).unwrap_err();
        assert!(matches!(err, Error::SigmaBelowFloor { .. }));
        assert!(GaussianRegressionModel::linear(zero, zero, 1e-6, 1e-6).is_ok());
    }

    #[test]
    fn bound_is_gaussian_peak() {
        let zero = Rational64::from_integer(0);
        let m = GaussianRegressionModel::linear(zero, zero, 1.0, 1e-6).unwrap();
        assert!((m.density_bound() - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn rational_coefficients_evaluate() {
        let m = GaussianRegressionModel::linear(Rational64::new(3, 4), Rational64::new(-1, 3), 2.0, 1e-6)
            .unwrap();
        let mean = m.mean_at(&InputToken::scalar(2.0)).unwrap();
        assert!((mean - (1.5 - 1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn custom_mean_sees_step_index() {
        let m = GaussianRegressionModel::with_mean_fn(
            |x: &InputToken| Ok(x.step_index.unwrap_or(0) as f64),
            0.5,
            1e-6,
        )
        .unwrap();
        let x = InputToken::symbol(7).at_step(4);
        assert_eq!(m.mean_at(&x).unwrap(), 4.0);
    }
}
