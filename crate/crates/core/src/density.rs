//! One-step predictive densities: single models, posterior mixtures, and the
//! (normalized) MDL envelope.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, LOG_FLOOR};
use crate::model::{ConditionalModel, Gaussian, InputToken, Outcome, OutcomeSpace, Spread};
use crate::quadrature::{integrate, spread_breakpoints, QuadratureSpec};

/// Half-width, in scales, of the interval outside which a Gaussian
/// component stays below 1e-300 for any admissible sigma.
const SUPPORT_SCALES: f64 = 38.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityKind {
    Gaussian,
    GaussianMixture,
    /// A single non-Gaussian real-valued model.
    Model,
    /// A posterior mixture with at least one non-Gaussian component.
    Mixture,
    /// Raw dynamic MDL prediction; mass may exceed one.
    Envelope,
    NormalizedEnvelope,
    Tabular,
}

#[derive(Debug, Clone)]
pub(crate) enum Component {
    Gaussian(Gaussian),
    Model {
        model: Arc<dyn ConditionalModel>,
        x: InputToken,
        spread: Spread,
    },
}

impl Component {
    pub(crate) fn at(model: &Arc<dyn ConditionalModel>, x: &InputToken) -> Result<Self> {
        if let Some(g) = model.gaussian(x)? {
            return Ok(Component::Gaussian(g));
        }
        let spread = model.spread(x)?.ok_or_else(|| {
            Error::InvalidModel("real-valued custom model must report a spread".into())
        })?;
        // surface payload errors now rather than inside an integrand
        model.log_density(x, Outcome::Real(spread.center))?;
        Ok(Component::Model {
            model: Arc::clone(model),
            x: x.clone(),
            spread,
        })
    }

    #[inline]
    fn ln_eval(&self, y: f64) -> f64 {
        match self {
            Component::Gaussian(g) => g.ln_pdf(y),
            Component::Model { model, x, .. } => model.log_density(x, Outcome::Real(y)).unwrap_or(f64::NAN),
        }
    }

    fn spread(&self) -> Spread {
        match self {
            Component::Gaussian(g) => Spread {
                center: g.mean,
                scale: g.sigma,
            },
            Component::Model { spread, .. } => *spread,
        }
    }

    fn is_gaussian(&self) -> bool {
        matches!(self, Component::Gaussian(_))
    }
}

#[derive(Debug, Clone)]
enum Repr {
    /// Probabilities (or masses) over a finite label set.
    Table(Vec<f64>),
    Single(Component),
    /// `ln Σ_i exp(lw_i + ln c_i(y))`.
    Mixture(Vec<(f64, Component)>),
    /// `max_i (offset_i + ln c_i(y)) − log_scale`.
    Envelope { terms: Vec<(f64, Component)>, log_scale: f64 },
}

/// An evaluable one-step predictive density with its total mass.
#[derive(Debug, Clone)]
pub struct PredictiveDensity {
    kind: DensityKind,
    repr: Repr,
    total_mass: f64,
}

impl PredictiveDensity {
    pub fn gaussian(g: Gaussian) -> Self {
        Self {
            kind: DensityKind::Gaussian,
            repr: Repr::Single(Component::Gaussian(g)),
            total_mass: 1.0,
        }
    }

    /// A probability (or sub-probability) vector over labels.
    pub fn tabular(probs: Vec<f64>) -> Self {
        Self::table(DensityKind::Tabular, probs)
    }

    pub(crate) fn table(kind: DensityKind, probs: Vec<f64>) -> Self {
        let total_mass = probs.iter().sum();
        Self {
            kind,
            repr: Repr::Table(probs),
            total_mass,
        }
    }

    pub(crate) fn single(component: Component) -> Self {
        let kind = if component.is_gaussian() {
            DensityKind::Gaussian
        } else {
            DensityKind::Model
        };
        Self {
            kind,
            repr: Repr::Single(component),
            total_mass: 1.0,
        }
    }

    /// Mixture from log-weights that already sum to (about) one.
    pub(crate) fn mixture(components: Vec<(f64, Component)>) -> Self {
        let all_gaussian = components.iter().all(|(_, c)| c.is_gaussian());
        let total_mass = components.iter().map(|(lw, _)| lw.exp()).sum();
        Self {
            kind: if all_gaussian {
                DensityKind::GaussianMixture
            } else {
                DensityKind::Mixture
            },
            repr: Repr::Mixture(components),
            total_mass,
        }
    }

    /// Envelope `y ↦ max_i exp(offset_i) c_i(y)`; mass is integrated with `quad`.
    pub(crate) fn envelope(terms: Vec<(f64, Component)>, quad: &QuadratureSpec) -> Result<Self> {
        let mut density = Self {
            kind: DensityKind::Envelope,
            total_mass: f64::NAN,
            repr: Repr::Envelope { terms, log_scale: 0.0 },
        };
        density.total_mass = match &density.repr {
            Repr::Envelope { terms, .. } if terms.len() == 1 => terms[0].0.exp(),
            _ => density.integrate_mass(quad)?,
        };
        Ok(density)
    }

    pub fn kind(&self) -> DensityKind {
        self.kind
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn space(&self) -> OutcomeSpace {
        match &self.repr {
            Repr::Table(p) => OutcomeSpace::Labels(p.len()),
            _ => OutcomeSpace::Real,
        }
    }

    /// The label vector for finite outcome spaces.
    pub fn probabilities(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Table(p) => Some(p),
            _ => None,
        }
    }

    /// Parameters when the density is a single Gaussian.
    pub fn as_gaussian(&self) -> Option<Gaussian> {
        match &self.repr {
            Repr::Single(Component::Gaussian(g)) => Some(*g),
            _ => None,
        }
    }

    /// `ln p(y)` for a real outcome; `-inf` where the density vanishes.
    #[inline]
    pub fn ln_eval_real(&self, y: f64) -> f64 {
        match &self.repr {
            Repr::Table(_) => f64::NAN,
            Repr::Single(c) => c.ln_eval(y),
            Repr::Mixture(parts) => {
                let mut buf = [0.0f64; 64];
                if parts.len() <= buf.len() {
                    for (slot, (lw, c)) in buf.iter_mut().zip(parts) {
                        *slot = lw + c.ln_eval(y);
                    }
                    log_sum_exp(&buf[..parts.len()])
                } else {
                    let v: Vec<f64> = parts.iter().map(|(lw, c)| lw + c.ln_eval(y)).collect();
                    log_sum_exp(&v)
                }
            }
            Repr::Envelope { terms, log_scale } => {
                let best = terms
                    .iter()
                    .map(|(off, c)| off + c.ln_eval(y))
                    .fold(f64::NEG_INFINITY, f64::max);
                best - log_scale
            }
        }
    }

    pub fn ln_eval(&self, y: Outcome) -> Result<f64> {
        match (&self.repr, y) {
            (Repr::Table(p), Outcome::Label(l)) => p
                .get(l)
                .map(|v| v.ln())
                .ok_or(Error::LabelOutOfRange { label: l, count: p.len() }),
            (Repr::Table(_), Outcome::Real(_)) => Err(Error::OutcomeMismatch {
                expected: "label",
                got: "real",
            }),
            (_, Outcome::Real(v)) if !v.is_finite() => Err(Error::NonFiniteOutcome(v)),
            (_, Outcome::Real(v)) => Ok(self.ln_eval_real(v)),
            (_, Outcome::Label(_)) => Err(Error::OutcomeMismatch {
                expected: "real",
                got: "label",
            }),
        }
    }

    pub fn eval(&self, y: Outcome) -> Result<f64> {
        self.ln_eval(y).map(f64::exp)
    }

    fn components(&self) -> Vec<&Component> {
        match &self.repr {
            Repr::Table(_) => Vec::new(),
            Repr::Single(c) => vec![c],
            Repr::Mixture(parts) => parts.iter().map(|(_, c)| c).collect(),
            Repr::Envelope { terms, .. } => terms.iter().map(|(_, c)| c).collect(),
        }
    }

    pub(crate) fn spreads(&self) -> Vec<Spread> {
        self.components().into_iter().map(Component::spread).collect()
    }

    /// Interval outside which the density is negligible (below ~1e-300 for
    /// Gaussian components); `None` on finite outcome spaces.
    pub fn support_hint(&self) -> Option<(f64, f64)> {
        let spreads = self.spreads();
        let lo = spreads
            .iter()
            .map(|s| s.center - SUPPORT_SCALES * s.scale)
            .fold(f64::INFINITY, f64::min);
        let hi = spreads
            .iter()
            .map(|s| s.center + SUPPORT_SCALES * s.scale)
            .fold(f64::NEG_INFINITY, f64::max);
        (lo.is_finite() && hi.is_finite()).then_some((lo, hi))
    }

    /// `∫p(y)dy` (or `Σ_y p(y)`) recomputed from scratch.
    pub fn integrate_mass(&self, quad: &QuadratureSpec) -> Result<f64> {
        if let Repr::Table(p) = &self.repr {
            return Ok(p.iter().sum());
        }
        let spreads = self.spreads();
        let (lo, hi) = quad
            .domain(spreads.iter().copied())
            .ok_or_else(|| Error::InvalidModel("density has no components".into()))?;
        integrate(|y| self.ln_eval_real(y).exp(), lo, hi, &spread_breakpoints(spreads), quad)
    }

    /// Divides by the total mass. Envelopes become normalized envelopes.
    pub fn normalize(&self) -> Result<Self> {
        let mass = self.total_mass;
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::DegenerateMass(mass));
        }
        let ln_mass = mass.ln();
        let (kind, repr) = match &self.repr {
            Repr::Table(p) => {
                let kind = match self.kind {
                    DensityKind::Envelope => DensityKind::NormalizedEnvelope,
                    k => k,
                };
                (kind, Repr::Table(p.iter().map(|v| v / mass).collect()))
            }
            Repr::Single(c) => (self.kind, Repr::Single(c.clone())),
            Repr::Mixture(parts) => (
                self.kind,
                Repr::Mixture(parts.iter().map(|(lw, c)| (lw - ln_mass, c.clone())).collect()),
            ),
            Repr::Envelope { terms, log_scale } => (
                DensityKind::NormalizedEnvelope,
                Repr::Envelope {
                    terms: terms.clone(),
                    log_scale: log_scale + ln_mass,
                },
            ),
        };
        let total_mass = match &repr {
            Repr::Table(p) => p.iter().sum(),
            _ => 1.0,
        };
        Ok(Self { kind, repr, total_mass })
    }
}

/// Drops envelope or mixture terms that cannot rise above `exp(LOG_FLOOR)`.
pub(crate) fn keep_term(log_weight: f64, density_bound: f64) -> bool {
    log_weight + density_bound.ln() >= LOG_FLOOR
}
