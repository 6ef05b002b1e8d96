use std::fmt;
use std::sync::Arc;

use num_rational::Rational64;

use super::{ConditionalModel, GaussianRegressionModel, OutcomeSpace};
use crate::error::{Error, Result};

/// Default lower bound on Gaussian noise scales.
pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-6;

const WEIGHT_SUM_SLACK: f64 = 1e-9;

/// One member of a class together with its prior weight `w_ν`.
#[derive(Clone)]
pub struct ClassEntry {
    pub weight: f64,
    pub model: Arc<dyn ConditionalModel>,
}

impl fmt::Debug for ClassEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClassEntry")
            .field("weight", &self.weight)
            .field("model", &self.model)
            .finish()
    }
}

impl ClassEntry {
    pub fn new(weight: f64, model: impl ConditionalModel + 'static) -> Self {
        Self {
            weight,
            model: Arc::new(model),
        }
    }
}

/// An infinite class, enumerated in order of non-increasing weight.
pub trait LazyEnumeration: Send + Sync + fmt::Debug {
    /// The `index`-th member, or `None` past the end.
    fn entry(&self, index: usize) -> Option<ClassEntry>;

    /// `Σ_{i ≥ from} w_i`.
    fn tail_weight(&self, from: usize) -> f64;

    /// Global density bound `C` over all members.
    fn global_bound(&self) -> f64;

    fn outcome_space(&self) -> OutcomeSpace;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnumerationMode {
    Finite,
    Lazy,
}

#[derive(Clone)]
enum Source {
    Finite(Vec<ClassEntry>),
    Lazy(Arc<dyn LazyEnumeration>),
}

/// A countable class of models with prior weights, ordered by non-increasing weight.
#[derive(Clone)]
pub struct ModelClass {
    source: Source,
    global_bound: f64,
    weight_sum: f64,
    space: OutcomeSpace,
}

impl fmt::Debug for ModelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelClass")
            .field("mode", &self.mode())
            .field("len", &self.len())
            .field("global_bound", &self.global_bound)
            .field("weight_sum", &self.weight_sum)
            .finish()
    }
}

impl ModelClass {
    /// Validates and wraps an already ordered list of entries.
    pub fn finite(entries: Vec<ClassEntry>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::InvalidClass("class has no members".into()))?;
        let space = first.model.outcome_space();
        let mut global_bound: f64 = 0.0;
        let mut weight_sum = 0.0;
        let mut previous = f64::INFINITY;
        for (i, e) in entries.iter().enumerate() {
            check_weight(i, e.weight, previous)?;
            previous = e.weight;
            weight_sum += e.weight;
            if e.model.outcome_space() != space {
                return Err(Error::InvalidClass(format!(
                    "member {i} lives on a different outcome space than member 0"
                )));
            }
            let b = e.model.density_bound();
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::InvalidClass(format!("member {i} has density bound {b}")));
            }
            global_bound = global_bound.max(b);
        }
        if weight_sum > 1.0 + WEIGHT_SUM_SLACK {
            return Err(Error::InvalidClass(format!("weights sum to {weight_sum} > 1")));
        }
        Ok(Self {
            source: Source::Finite(entries),
            global_bound,
            weight_sum,
            space,
        })
    }

    /// Stable-sorts entries by non-increasing weight, then validates.
    pub fn sorted(mut entries: Vec<ClassEntry>) -> Result<Self> {
        entries.sort_by(|a, b| b.weight.total_cmp(&a.weight));
        Self::finite(entries)
    }

    pub fn lazy(source: Arc<dyn LazyEnumeration>) -> Result<Self> {
        let global_bound = source.global_bound();
        if !(global_bound.is_finite() && global_bound > 0.0) {
            return Err(Error::InvalidClass(format!("global bound {global_bound}")));
        }
        let first = source
            .entry(0)
            .ok_or_else(|| Error::InvalidClass("class has no members".into()))?;
        check_weight(0, first.weight, f64::INFINITY)?;
        let weight_sum = source.tail_weight(0);
        if !(weight_sum > 0.0 && weight_sum <= 1.0 + WEIGHT_SUM_SLACK) {
            return Err(Error::InvalidClass(format!("weights sum to {weight_sum}")));
        }
        Ok(Self {
            space: source.outcome_space(),
            source: Source::Lazy(source),
            global_bound,
            weight_sum,
        })
    }

    pub fn mode(&self) -> EnumerationMode {
        match self.source {
            Source::Finite(_) => EnumerationMode::Finite,
            Source::Lazy(_) => EnumerationMode::Lazy,
        }
    }

    /// Number of members; `None` for lazy classes.
    pub fn len(&self) -> Option<usize> {
        match &self.source {
            Source::Finite(e) => Some(e.len()),
            Source::Lazy(_) => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn entries(&self) -> Option<&[ClassEntry]> {
        match &self.source {
            Source::Finite(e) => Some(e),
            Source::Lazy(_) => None,
        }
    }

    /// The `index`-th member in enumeration order. Lazy members are checked
    /// against the class contract as they are produced.
    pub fn entry(&self, index: usize) -> Result<Option<ClassEntry>> {
        match &self.source {
            Source::Finite(e) => Ok(e.get(index).cloned()),
            Source::Lazy(src) => {
                let Some(entry) = src.entry(index) else {
                    return Ok(None);
                };
                let previous = match index {
                    0 => f64::INFINITY,
                    _ => src.entry(index - 1).map_or(f64::INFINITY, |e| e.weight),
                };
                check_weight(index, entry.weight, previous)?;
                if entry.model.density_bound() > self.global_bound {
                    return Err(Error::InvalidClass(format!(
                        "member {index} exceeds the declared global bound"
                    )));
                }
                if entry.model.outcome_space() != self.space {
                    return Err(Error::InvalidClass(format!(
                        "member {index} lives on a different outcome space"
                    )));
                }
                Ok(Some(entry))
            }
        }
    }

    pub fn weight(&self, index: usize) -> Result<Option<f64>> {
        Ok(self.entry(index)?.map(|e| e.weight))
    }

    /// `Σ_{i ≥ from} w_i`.
    pub fn tail_weight(&self, from: usize) -> f64 {
        match &self.source {
            Source::Finite(e) => e.iter().skip(from).map(|e| e.weight).sum(),
            Source::Lazy(src) => src.tail_weight(from),
        }
    }

    /// `C`, the supremum of all member densities.
    pub fn global_bound(&self) -> f64 {
        self.global_bound
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    /// Weights summing to less than one (permitted, but flagged).
    pub fn is_semimeasure(&self) -> bool {
        self.weight_sum < 1.0 - WEIGHT_SUM_SLACK
    }

    pub fn outcome_space(&self) -> OutcomeSpace {
        self.space
    }

    /// The common `σ` if every member is a Gaussian regression model with the same noise.
    pub fn shared_sigma(&self) -> Option<f64> {
        let entries = self.entries()?;
        let mut sigma = None;
        for e in entries {
            let s = e.model.constant_sigma()?;
            match sigma {
                None => sigma = Some(s),
                Some(prev) if prev == s => {}
                Some(_) => return None,
            }
        }
        sigma
    }
}

fn check_weight(index: usize, weight: f64, previous: f64) -> Result<()> {
    if !(weight.is_finite() && weight > 0.0) {
        return Err(Error::InvalidClass(format!("member {index} has weight {weight}")));
    }
    if weight > previous {
        return Err(Error::InvalidClass(format!(
            "weights must be non-increasing: member {index} has {weight} > {previous}"
        )));
    }
    Ok(())
}

/// Prior over a finite coefficient grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prior {
    Uniform,
    /// `w ∝ 2^{−ℓ(a) − ℓ(b)}` with [`rational_code_length`], rescaled to sum to one.
    CodeLength,
}

/// Prefix-code length in bits of a reduced rational `p/q`: one sign bit plus
/// Elias-gamma codes of `|p| + 1` and `q`.
pub fn rational_code_length(r: Rational64) -> u32 {
    fn gamma_len(m: u64) -> u32 {
        2 * (63 - m.leading_zeros()) + 1
    }
    let p = r.numer().unsigned_abs();
    let q = r.denom().unsigned_abs();
    1 + gamma_len(p + 1) + gamma_len(q)
}

/// The class `{a·x + b + N(0, σ²)}` over a finite grid of rational `(a, b)`.
pub fn build_linear_rational_class(
    coef_grid: &[(Rational64, Rational64)],
    sigma: f64,
    prior: Prior,
    sigma_floor: f64,
) -> Result<ModelClass> {
    if coef_grid.is_empty() {
        return Err(Error::InvalidClass("coefficient grid is empty".into()));
    }
    let raw: Vec<f64> = match prior {
        Prior::Uniform => vec![1.0; coef_grid.len()],
        Prior::CodeLength => coef_grid
            .iter()
            .map(|&(a, b)| {
                let bits = rational_code_length(a) + rational_code_length(b);
                (-(bits as f64) * std::f64::consts::LN_2).exp()
            })
            .collect(),
    };
    let total: f64 = raw.iter().sum();
    let mut entries = Vec::with_capacity(coef_grid.len());
    for (&(a, b), w) in coef_grid.iter().zip(raw) {
        let model = GaussianRegressionModel::linear(a, b, sigma, sigma_floor)?;
        entries.push(ClassEntry::new(w / total, model));
    }
    ModelClass::sorted(entries)
}
