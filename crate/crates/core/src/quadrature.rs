//! Adaptive Simpson quadrature over finite intervals with breakpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Spread;

/// Always subdivide at least this often, so a coarse first sample cannot
/// accept a bump it happened to step over.
const MIN_DEPTH: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureScheme {
    #[default]
    AdaptiveSimpson,
}

/// Integration settings. The domain for real-valued densities is
/// `[min center − k·max scale, max center + k·max scale]` with `k = domain_padding`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub scheme: QuadratureScheme,
    pub abs_tol: f64,
    pub max_depth: u32,
    pub domain_padding: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            scheme: QuadratureScheme::AdaptiveSimpson,
            abs_tol: 1e-9,
            max_depth: 50,
            domain_padding: 12.0,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return Err(Error::InvalidQuadrature(format!("abs_tol must be > 0, got {}", self.abs_tol)));
        }
        if self.max_depth < 10 {
            return Err(Error::InvalidQuadrature(format!(
                "max_depth must be >= 10, got {}",
                self.max_depth
            )));
        }
        if !(self.domain_padding > 0.0 && self.domain_padding.is_finite()) {
            return Err(Error::InvalidQuadrature(format!(
                "domain_padding must be > 0, got {}",
                self.domain_padding
            )));
        }
        Ok(())
    }

    /// Integration interval covering every spread, padded by `domain_padding` scales.
    pub fn domain<I: IntoIterator<Item = Spread>>(&self, spreads: I) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut scale: f64 = 0.0;
        for s in spreads {
            lo = lo.min(s.center);
            hi = hi.max(s.center);
            scale = scale.max(s.scale);
        }
        if !lo.is_finite() || !hi.is_finite() {
            return None;
        }
        Some((lo - self.domain_padding * scale, hi + self.domain_padding * scale))
    }
}

/// Breakpoints at each center and one scale either side.
pub fn spread_breakpoints<I: IntoIterator<Item = Spread>>(spreads: I) -> Vec<f64> {
    let mut pts = Vec::new();
    for s in spreads {
        pts.extend([s.center - s.scale, s.center, s.center + s.scale]);
    }
    pts
}

struct Failure {
    lo: f64,
    hi: f64,
    estimate: f64,
    error: f64,
}

struct Integrator<'a, F> {
    f: &'a F,
    max_depth: u32,
    failure: Option<Failure>,
    bad_point: Option<f64>,
}

impl<F: Fn(f64) -> f64> Integrator<'_, F> {
    fn eval(&mut self, y: f64) -> f64 {
        let v = (self.f)(y);
        if !v.is_finite() && self.bad_point.is_none() {
            self.bad_point = Some(y);
        }
        v
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(&mut self, a: f64, fa: f64, m: f64, fm: f64, b: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = self.eval(lm);
        let frm = self.eval(rm);
        if self.bad_point.is_some() {
            return f64::NAN;
        }
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        let unsplittable = lm <= a || lm >= m || rm <= m || rm >= b;
        if depth >= MIN_DEPTH && (delta.abs() <= 15.0 * tol || unsplittable) {
            return left + right + delta / 15.0;
        }
        if depth >= self.max_depth {
            let err = delta.abs() / 15.0;
            if self.failure.as_ref().is_none_or(|f| err > f.error) {
                self.failure = Some(Failure {
                    lo: a,
                    hi: b,
                    estimate: left + right,
                    error: err,
                });
            }
            return left + right + delta / 15.0;
        }
        self.refine(a, fa, lm, flm, m, fm, left, 0.5 * tol, depth + 1)
            + self.refine(m, fm, rm, frm, b, fb, right, 0.5 * tol, depth + 1)
    }
}

/// `∫_lo^hi f(y) dy`, splitting the interval at the interior `breakpoints`.
///
/// The absolute tolerance is shared evenly across the pieces.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, breakpoints: &[f64], spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::InvalidQuadrature(format!("bad interval [{lo}, {hi}]")));
    }
    if lo == hi {
        return Ok(0.0);
    }
    let mut knots: Vec<f64> = breakpoints.iter().copied().filter(|&p| p > lo && p < hi).collect();
    knots.push(lo);
    knots.push(hi);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let pieces = knots.len() - 1;
    let tol = spec.abs_tol / pieces as f64;

    let mut it = Integrator {
        f: &f,
        max_depth: spec.max_depth,
        failure: None,
        bad_point: None,
    };
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = 0.5 * (a + b);
        let fa = it.eval(a);
        let fm = it.eval(m);
        let fb = it.eval(b);
        if let Some(y) = it.bad_point {
            return Err(Error::NonFiniteIntegrand(y));
        }
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        total += it.refine(a, fa, m, fm, b, fb, whole, tol, 1);
        if let Some(y) = it.bad_point {
            return Err(Error::NonFiniteIntegrand(y));
        }
    }
    if let Some(fail) = it.failure {
        return Err(Error::QuadratureNonConvergence {
            lo: fail.lo,
            hi: fail.hi,
            estimate: fail.estimate,
            error_estimate: fail.error,
            depth: spec.max_depth,
        });
    }
    Ok(total)
}
