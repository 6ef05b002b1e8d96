use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};

use super::{check_outcome, ConditionalModel, InputToken, ModelKind, Outcome, OutcomeSpace, Payload};
use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

type ProbClosure = dyn Fn(&InputToken) -> Result<Vec<f64>> + Send + Sync;

#[derive(Clone)]
enum ProbFn {
    /// One probability row per input symbol.
    Table(Vec<Vec<f64>>),
    Custom(Arc<ProbClosure>),
}

/// Classification model over dense labels `0..label_count`.
#[derive(Clone)]
pub struct TabularClassificationModel {
    label_count: usize,
    prob_fn: ProbFn,
    bound: f64,
}

impl fmt::Debug for TabularClassificationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.prob_fn {
            ProbFn::Table(rows) => f
                .debug_struct("TabularClassificationModel")
                .field("label_count", &self.label_count)
                .field("rows", rows)
                .finish(),
            ProbFn::Custom(_) => f
                .debug_struct("TabularClassificationModel")
                .field("label_count", &self.label_count)
                .finish_non_exhaustive(),
        }
    }
}

impl TabularClassificationModel {
    /// Builds a model from a table indexed by [`Payload::Symbol`].
    pub fn from_table(rows: Vec<Vec<f64>>) -> Result<Self> {
        let label_count = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidModel("empty probability table".into()))?;
        if label_count < 2 {
            return Err(Error::InvalidModel("need at least two labels".into()));
        }
        for row in &rows {
            if row.len() != label_count {
                return Err(Error::LengthMismatch {
                    left: row.len(),
                    right: label_count,
                });
            }
            check_probability_row(row)?;
        }
        let bound = rows.iter().flatten().copied().fold(0.0, f64::max);
        Ok(Self {
            label_count,
            prob_fn: ProbFn::Table(rows),
            bound,
        })
    }

    /// Builds a model from an arbitrary map; every emitted row is checked.
    pub fn with_prob_fn<F>(label_count: usize, prob_fn: F) -> Result<Self>
    where
        F: Fn(&InputToken) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        if label_count < 2 {
            return Err(Error::InvalidModel("need at least two labels".into()));
        }
        Ok(Self {
            label_count,
            prob_fn: ProbFn::Custom(Arc::new(prob_fn)),
            bound: 1.0,
        })
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn probabilities(&self, x: &InputToken) -> Result<Vec<f64>> {
        match &self.prob_fn {
            ProbFn::Table(rows) => match x.payload {
                Payload::Symbol(s) => rows.get(s as usize).cloned().ok_or(Error::SymbolOutOfRange {
                    symbol: s,
                    rows: rows.len(),
                }),
                ref other => Err(Error::PayloadMismatch {
                    expected: "symbol",
                    got: other.kind_name(),
                }),
            },
            ProbFn::Custom(f) => {
                let row = f(x)?;
                if row.len() != self.label_count {
                    return Err(Error::LengthMismatch {
                        left: row.len(),
                        right: self.label_count,
                    });
                }
                check_probability_row(&row)?;
                Ok(row)
            }
        }
    }
}

fn check_probability_row(row: &[f64]) -> Result<()> {
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidModel(format!("probability row has invalid entries: {row:?}")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidModel(format!("probability row sums to {sum}")));
    }
    Ok(())
}

impl ConditionalModel for TabularClassificationModel {
    fn kind(&self) -> ModelKind {
        ModelKind::TabularClassification
    }

    fn outcome_space(&self) -> OutcomeSpace {
        OutcomeSpace::Labels(self.label_count)
    }

    fn density_bound(&self) -> f64 {
        self.bound
    }

    fn log_density(&self, x: &InputToken, y: Outcome) -> Result<f64> {
        check_outcome(y)?;
        let label = match y {
            Outcome::Label(l) => l,
            other => {
                return Err(Error::OutcomeMismatch {
                    expected: "label",
                    got: other.kind_name(),
                })
            }
        };
        if label >= self.label_count {
            return Err(Error::LabelOutOfRange {
                label,
                count: self.label_count,
            });
        }
        Ok(self.probabilities(x)?[label].ln())
    }

    fn sample(&self, x: &InputToken, rng: &mut dyn RngCore) -> Result<Outcome> {
        let probs = self.probabilities(x)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (label, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                last_positive = label;
            }
            acc += p;
            if u < acc {
                return Ok(Outcome::Label(label));
            }
        }
        Ok(Outcome::Label(last_positive))
    }

    fn label_probabilities(&self, x: &InputToken) -> Result<Option<Vec<f64>>> {
        self.probabilities(x).map(Some)
    }
}
