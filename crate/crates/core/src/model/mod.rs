//! Conditional models, the built-in Gaussian and tabular families, and
//! countable weighted model classes.

mod class;
mod gaussian;
mod tabular;
mod validate;

use std::fmt;

use rand::RngCore;

use crate::error::{Error, Result};

pub use class::{
    build_linear_rational_class, rational_code_length, ClassEntry, EnumerationMode,
    LazyEnumeration, ModelClass, Prior, DEFAULT_SIGMA_FLOOR,
};
pub use gaussian::{Gaussian, GaussianRegressionModel, MeanFn};
pub use tabular::TabularClassificationModel;
pub use validate::{validate_class, ModelValidation, ValidationFlag, ValidationReport};

/// Payload carried by an input token.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Scalar(f64),
    Vector(Vec<f64>),
    Symbol(u32),
}

impl Payload {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Payload::Scalar(_) => "scalar",
            Payload::Vector(_) => "vector",
            Payload::Symbol(_) => "symbol",
        }
    }
}

/// One input `x_t`. The optional step index lets time-dependent models see `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputToken {
    pub payload: Payload,
    pub step_index: Option<u64>,
}

impl InputToken {
    pub fn scalar(value: f64) -> Self {
        Self {
            payload: Payload::Scalar(value),
            step_index: None,
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Self {
            payload: Payload::Vector(values),
            step_index: None,
        }
    }

    pub fn symbol(symbol: u32) -> Self {
        Self {
            payload: Payload::Symbol(symbol),
            step_index: None,
        }
    }

    pub fn at_step(mut self, t: u64) -> Self {
        self.step_index = Some(t);
        self
    }
}

/// An observed output: a real value for regression, a dense label for classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Real(f64),
    Label(usize),
}

impl Outcome {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Outcome::Real(_) => "real",
            Outcome::Label(_) => "label",
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match *self {
            Outcome::Real(y) => Some(y),
            Outcome::Label(_) => None,
        }
    }

    pub fn as_label(&self) -> Option<usize> {
        match *self {
            Outcome::Label(y) => Some(y),
            Outcome::Real(_) => None,
        }
    }
}

/// Measure space the outputs live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeSpace {
    Real,
    Labels(usize),
}

impl OutcomeSpace {
    pub fn name(&self) -> &'static str {
        match self {
            OutcomeSpace::Real => "real",
            OutcomeSpace::Labels(_) => "label",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    GaussianRegression,
    TabularClassification,
    Custom,
}

/// Location and scale of a real-valued conditional density; used to place
/// quadrature domains and breakpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub center: f64,
    pub scale: f64,
}

/// A map from inputs to (uniformly bounded) conditional densities `ν(y|x)`.
///
/// Implementations must be immutable; classes share them across workers.
pub trait ConditionalModel: Send + Sync + fmt::Debug {
    fn kind(&self) -> ModelKind;

    fn outcome_space(&self) -> OutcomeSpace;

    /// Supremum of `ν(y|x)` over all `x` and `y`.
    fn density_bound(&self) -> f64;

    /// `ln ν(y|x)`; `-inf` for an impossible outcome, never NaN.
    fn log_density(&self, x: &InputToken, y: Outcome) -> Result<f64>;

    fn sample(&self, x: &InputToken, rng: &mut dyn RngCore) -> Result<Outcome>;

    /// Mean and standard deviation when `ν(·|x)` is Gaussian.
    fn gaussian(&self, _x: &InputToken) -> Result<Option<Gaussian>> {
        Ok(None)
    }

    /// Noise scale when `ν(·|x)` is Gaussian with the same `σ` for every `x`.
    fn constant_sigma(&self) -> Option<f64> {
        None
    }

    /// Label distribution when the outcome space is finite.
    fn label_probabilities(&self, _x: &InputToken) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }

    /// Where `ν(·|x)` puts its mass. Real-valued custom models should override.
    fn spread(&self, x: &InputToken) -> Result<Option<Spread>> {
        Ok(self.gaussian(x)?.map(|g| Spread {
            center: g.mean,
            scale: g.sigma,
        }))
    }
}

/// `Σ_t ln ν(y_t|x_t)`, the log-density of the product measure on a sequence.
pub fn log_joint(model: &dyn ConditionalModel, xs: &[InputToken], ys: &[Outcome]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        check_outcome(y)?;
        let ld = model.log_density(x, y)?;
        if ld.is_nan() {
            return Err(Error::InvalidModel("log-density evaluated to NaN".into()));
        }
        // no early exit on -inf: later payload errors must still surface
        total += ld;
    }
    Ok(total)
}

pub(crate) fn check_outcome(y: Outcome) -> Result<()> {
    match y {
        Outcome::Real(v) if !v.is_finite() => Err(Error::NonFiniteOutcome(v)),
        _ => Ok(()),
    }
}
