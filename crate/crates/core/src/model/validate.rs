use super::{ConditionalModel, InputToken, ModelClass, Outcome, OutcomeSpace};
use crate::quadrature::{integrate, spread_breakpoints, QuadratureSpec};

const REGRESSION_MASS_TOL: f64 = 1e-8;
const LABEL_MASS_TOL: f64 = 1e-12;
const GRID_POINTS: usize = 2001;
/// Lazy classes are checked on this many leading members.
const LAZY_PREFIX: usize = 1024;

/// Numerical check results for one member.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelValidation {
    pub index: usize,
    pub weight: f64,
    pub declared_bound: f64,
    /// Largest density seen over all probes.
    pub max_density: f64,
    /// `∫ν(y|x)dy` (or `Σ_y ν(y|x)`) per probe input.
    pub integrals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationFlag {
    Semimeasure { weight_sum: f64 },
    MassOff { model: usize, probe: usize, mass: f64 },
    DensityAboveBound { model: usize, observed: f64, bound: f64 },
    BoundAboveGlobal { model: usize, bound: f64, global: f64 },
    EvaluationFailed { model: usize, probe: usize, message: String },
}

impl ValidationFlag {
    /// Semimeasure weights are permitted; everything else is a violation.
    pub fn is_violation(&self) -> bool {
        !matches!(self, ValidationFlag::Semimeasure { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub models: Vec<ModelValidation>,
    pub weight_sum: f64,
    pub global_bound: f64,
    pub flags: Vec<ValidationFlag>,
}

impl ValidationReport {
    pub fn has_violations(&self) -> bool {
        self.flags.iter().any(ValidationFlag::is_violation)
    }

    pub fn is_semimeasure(&self) -> bool {
        self.flags.iter().any(|f| matches!(f, ValidationFlag::Semimeasure { .. }))
    }
}

/// Checks normalization and the density bound of every member on the given probes.
///
/// Violations are reported, never raised.
pub fn validate_class(class: &ModelClass, probe_inputs: &[InputToken], quad: &QuadratureSpec) -> ValidationReport {
    let mut flags = Vec::new();
    if class.is_semimeasure() {
        flags.push(ValidationFlag::Semimeasure {
            weight_sum: class.weight_sum(),
        });
    }
    let global = class.global_bound();
    let count = class.len().unwrap_or(LAZY_PREFIX);
    let mut models = Vec::new();
    for index in 0..count {
        let entry = match class.entry(index) {
            Ok(Some(e)) => e,
            Ok(None) => break,
            Err(e) => {
                flags.push(ValidationFlag::EvaluationFailed {
                    model: index,
                    probe: 0,
                    message: e.to_string(),
                });
                break;
            }
        };
        let model = entry.model.as_ref();
        let bound = model.density_bound();
        if bound > global {
            flags.push(ValidationFlag::BoundAboveGlobal {
                model: index,
                bound,
                global,
            });
        }
        let mut max_density: f64 = 0.0;
        let mut integrals = Vec::with_capacity(probe_inputs.len());
        for (probe, x) in probe_inputs.iter().enumerate() {
            match probe_model(model, x, quad) {
                Ok((mass, peak)) => {
                    let tol = match model.outcome_space() {
                        OutcomeSpace::Real => REGRESSION_MASS_TOL,
                        OutcomeSpace::Labels(_) => LABEL_MASS_TOL,
                    };
                    if (mass - 1.0).abs() > tol {
                        flags.push(ValidationFlag::MassOff {
                            model: index,
                            probe,
                            mass,
                        });
                    }
                    max_density = max_density.max(peak);
                    integrals.push(mass);
                }
                Err(message) => {
                    flags.push(ValidationFlag::EvaluationFailed {
                        model: index,
                        probe,
                        message,
                    });
                    integrals.push(f64::NAN);
                }
            }
        }
        if max_density > bound * (1.0 + 1e-12) {
            flags.push(ValidationFlag::DensityAboveBound {
                model: index,
                observed: max_density,
                bound,
            });
        }
        models.push(ModelValidation {
            index,
            weight: entry.weight,
            declared_bound: bound,
            max_density,
            integrals,
        });
    }
    ValidationReport {
        models,
        weight_sum: class.weight_sum(),
        global_bound: global,
        flags,
    }
}

/// Returns (total mass, largest sampled density) of `ν(·|x)`.
fn probe_model(model: &dyn ConditionalModel, x: &InputToken, quad: &QuadratureSpec) -> Result<(f64, f64), String> {
    match model.outcome_space() {
        OutcomeSpace::Labels(n) => {
            let mut sum = 0.0;
            let mut peak: f64 = 0.0;
            for label in 0..n {
                let p = model.log_density(x, Outcome::Label(label)).map_err(|e| e.to_string())?.exp();
                sum += p;
                peak = peak.max(p);
            }
            Ok((sum, peak))
        }
        OutcomeSpace::Real => {
            let spread = model
                .spread(x)
                .map_err(|e| e.to_string())?
                .ok_or_else(|| "real-valued model does not report a spread".to_string())?;
            let (lo, hi) = quad.domain([spread]).ok_or("empty domain")?;
            let density = |y: f64| model.log_density(x, Outcome::Real(y)).map(f64::exp).unwrap_or(f64::NAN);
            let mass = integrate(density, lo, hi, &spread_breakpoints([spread]), quad).map_err(|e| e.to_string())?;
            let mut peak = density(spread.center);
            for i in 0..GRID_POINTS {
                let y = lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64;
                peak = peak.max(density(y));
            }
            Ok((mass, peak))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_linear_rational_class, ClassEntry, Prior, TabularClassificationModel, DEFAULT_SIGMA_FLOOR};
    use num_rational::Rational64;

    fn probes() -> Vec<InputToken> {
        [-2.0, 0.0, 1.5].iter().map(|&v| InputToken::scalar(v)).collect()
    }

    #[test]
    fn singleton_gaussian_passes() {
        let one = Rational64::from_integer(1);
        let class = build_linear_rational_class(&[(one, one)], 1.0, Prior::Uniform, DEFAULT_SIGMA_FLOOR).unwrap();
        let report = validate_class(&class, &probes(), &QuadratureSpec::default());
        assert!(!report.has_violations(), "{:?}", report.flags);
        let m = &report.models[0];
        for &i in &m.integrals {
            assert!((i - 1.0).abs() <= 1e-8);
        }
        assert!(m.max_density <= 0.39895);
    }

    #[test]
    fn semimeasure_is_flagged_not_failed() {
        let t = || TabularClassificationModel::from_table(vec![vec![0.25, 0.75]]).unwrap();
        let class = ModelClass::finite(vec![ClassEntry::new(0.25, t()), ClassEntry::new(0.25, t())]).unwrap();
        let report = validate_class(&class, &[InputToken::symbol(0)], &QuadratureSpec::default());
        assert!(report.is_semimeasure());
        assert!(!report.has_violations());
        for m in &report.models {
            assert!((m.integrals[0] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn payload_errors_are_reported() {
        let t = TabularClassificationModel::from_table(vec![vec![0.5, 0.5]]).unwrap();
        let class = ModelClass::finite(vec![ClassEntry::new(1.0, t)]).unwrap();
        let report = validate_class(&class, &[InputToken::scalar(0.0)], &QuadratureSpec::default());
        assert!(report.has_violations());
    }
}
