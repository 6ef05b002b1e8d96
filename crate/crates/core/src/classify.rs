//! Finite-label specialization: exact predictive vectors, Hellinger and
//! quadratic loss sums, and an exhaustive-enumeration oracle for short horizons.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::discrete_distances;
use crate::model::{ClassEntry, InputToken, ModelClass, OutcomeSpace, TabularClassificationModel};
use crate::predictor::{label_probs, PredictorState};
use crate::quadrature::QuadratureSpec;
use crate::simulate::{generate_stream, BoundReport, QuantityReport, Scenario, TailStatistic};

/// Longest horizon accepted by [`enumerate_expected_losses`].
pub const MAX_ENUMERATION_HORIZON: usize = 8;

/// Final-step `max_y |μ(y|x) − ϱ^static(y|x)|` threshold for the convergence proxy.
pub const PROBABILITY_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    Bayes,
    Static,
    Dynamic,
    Normalized,
}

fn labels(class: &ModelClass) -> Result<usize> {
    match class.outcome_space() {
        OutcomeSpace::Labels(n) => Ok(n),
        OutcomeSpace::Real => Err(Error::SpaceMismatch),
    }
}

/// The label distribution predicted at `x` from the state's history.
pub fn classify_predict(state: &PredictorState, x: &InputToken, kind: PredictorKind) -> Result<Vec<f64>> {
    labels(state.class())?;
    // Label spaces never integrate.
    let quad = QuadratureSpec::default();
    let density = match kind {
        PredictorKind::Bayes => state.bayes_predict(x)?,
        PredictorKind::Static => state.static_predict(x)?,
        PredictorKind::Dynamic => state.dynamic_predict(x, &quad)?,
        PredictorKind::Normalized => state.normalized_predict(x, &quad)?,
    };
    density
        .probabilities()
        .map(<[f64]>::to_vec)
        .ok_or(Error::SpaceMismatch)
}

/// Per-step classification losses, in ledger column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassQuantity {
    HellingerBayes,
    HellingerStatic,
    QuadraticStatic,
    HellingerDynamic,
    QuadraticDynamic,
    HellingerNormalized,
    QuadraticNormalized,
}

impl ClassQuantity {
    pub const ALL: [ClassQuantity; 7] = [
        ClassQuantity::HellingerBayes,
        ClassQuantity::HellingerStatic,
        ClassQuantity::QuadraticStatic,
        ClassQuantity::HellingerDynamic,
        ClassQuantity::QuadraticDynamic,
        ClassQuantity::HellingerNormalized,
        ClassQuantity::QuadraticNormalized,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn column(self) -> &'static str {
        match self {
            ClassQuantity::HellingerBayes => "h2_mu_xi",
            ClassQuantity::HellingerStatic => "h2_mu_static",
            ClassQuantity::QuadraticStatic => "quad_mu_static",
            ClassQuantity::HellingerDynamic => "h2_mu_rho",
            ClassQuantity::QuadraticDynamic => "quad_mu_rho",
            ClassQuantity::HellingerNormalized => "h2_mu_rhobar",
            ClassQuantity::QuadraticNormalized => "quad_mu_rhobar",
        }
    }

    pub fn from_column(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|q| q.column() == name)
    }

    pub fn predictor(self) -> PredictorKind {
        match self {
            ClassQuantity::HellingerBayes => PredictorKind::Bayes,
            ClassQuantity::HellingerStatic | ClassQuantity::QuadraticStatic => PredictorKind::Static,
            ClassQuantity::HellingerDynamic | ClassQuantity::QuadraticDynamic => PredictorKind::Dynamic,
            ClassQuantity::HellingerNormalized | ClassQuantity::QuadraticNormalized => PredictorKind::Normalized,
        }
    }

    pub fn bound(self, w_mu: f64) -> f64 {
        match self {
            ClassQuantity::HellingerBayes => (1.0 / w_mu).ln(),
            _ => 21.0 / w_mu,
        }
    }
}

fn enabled(scenario: &Scenario, kind: PredictorKind) -> bool {
    let p = scenario.predictors;
    match kind {
        PredictorKind::Bayes => p.bayes,
        PredictorKind::Static => p.static_mdl,
        PredictorKind::Dynamic => p.dynamic,
        PredictorKind::Normalized => p.normalized,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationRecord {
    pub t: usize,
    pub values: [Option<f64>; 7],
}

impl ClassificationRecord {
    pub fn get(&self, q: ClassQuantity) -> Option<f64> {
        self.values[q.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationLedger {
    pub run_id: u64,
    pub records: Vec<ClassificationRecord>,
    /// `max_y |μ(y|x_T) − ϱ^static(y|x_T)|` at the last step.
    pub final_max_abs_static: Option<f64>,
}

impl ClassificationLedger {
    pub fn total(&self, q: ClassQuantity) -> Option<f64> {
        if self.records.is_empty() {
            return None;
        }
        self.records.iter().map(|r| r.get(q)).sum()
    }
}

/// One classification run under the online protocol.
pub fn run_classification_online(scenario: &Scenario, run_id: u64) -> Result<ClassificationLedger> {
    let n = labels(&scenario.class)?;
    let mu = scenario.true_model()?;
    let stream = generate_stream(scenario, run_id)?;
    let mut state = PredictorState::new(Arc::clone(&scenario.class))?;
    let mut ledger = ClassificationLedger {
        run_id,
        records: Vec::with_capacity(stream.len()),
        final_max_abs_static: None,
    };
    for (i, (x, y)) in stream.iter().enumerate() {
        let t = i + 1;
        let wrap = |e: Error| e.in_run(run_id, t);
        let truth = label_probs(mu.as_ref(), x, n).map_err(wrap)?;
        let mut rec = ClassificationRecord { t, values: [None; 7] };
        for kind in [
            PredictorKind::Bayes,
            PredictorKind::Static,
            PredictorKind::Dynamic,
            PredictorKind::Normalized,
        ] {
            if !enabled(scenario, kind) {
                continue;
            }
            let pred = classify_predict(&state, x, kind).map_err(wrap)?;
            let (h2, sq) = discrete_distances(&truth, &pred).map_err(wrap)?;
            for q in ClassQuantity::ALL.into_iter().filter(|q| q.predictor() == kind) {
                rec.values[q.index()] = Some(if q.column().starts_with("h2") { h2 } else { sq });
            }
            if kind == PredictorKind::Static && t == stream.len() {
                let gap = truth.iter().zip(&pred).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                ledger.final_max_abs_static = Some(gap);
            }
        }
        ledger.records.push(rec);
        state.update(x, *y).map_err(wrap)?;
    }
    Ok(ledger)
}

pub fn classification_runs(scenario: &Scenario) -> Result<Vec<ClassificationLedger>> {
    scenario.validate()?;
    labels(&scenario.class)?;
    (0..scenario.runs as u64)
        .into_par_iter()
        .map(|r| run_classification_online(scenario, r))
        .collect()
}

pub fn summarize_classification(scenario: &Scenario, ledgers: &[ClassificationLedger]) -> Result<BoundReport> {
    let w_mu = scenario.w_mu()?;
    let mut quantities = Vec::new();
    for q in ClassQuantity::ALL {
        if !enabled(scenario, q.predictor()) {
            continue;
        }
        let totals: Option<Vec<f64>> = ledgers.iter().map(|l| l.total(q)).collect();
        if let Some(totals) = totals {
            quantities.push(QuantityReport::from_totals(q.column(), &totals, q.bound(w_mu)));
        }
    }
    let tail = if scenario.predictors.static_mdl && !ledgers.is_empty() {
        let below = ledgers
            .iter()
            .filter(|l| l.final_max_abs_static.is_some_and(|g| g < PROBABILITY_TOLERANCE))
            .count();
        Some(TailStatistic {
            after: scenario.horizon.saturating_sub(1),
            threshold: PROBABILITY_TOLERANCE,
            fraction_below: below as f64 / ledgers.len() as f64,
        })
    } else {
        None
    };
    let sandwich_violations = ledgers
        .iter()
        .flat_map(|l| &l.records)
        .filter(|r| !r.values.iter().flatten().all(|v| v.is_finite() && *v >= 0.0))
        .count();
    Ok(BoundReport {
        scenario: scenario.name.clone(),
        w_mu,
        runs: ledgers.len(),
        horizon: scenario.horizon,
        quantities,
        tail,
        triangle_violations: 0,
        sandwich_violations,
    })
}

pub fn run_classification(scenario: &Scenario) -> Result<BoundReport> {
    summarize_classification(scenario, &classification_runs(scenario)?)
}

/// Exact expected cumulative losses, indexed by [`ClassQuantity::index`].
pub type ExpectedLosses = [f64; 7];

/// Expected cumulative losses for fixed inputs `xs`, by summing over every
/// outcome sequence in `Yᵀ`. Uses plain products rather than the online state.
pub fn enumerate_expected_losses(class: &ModelClass, true_index: usize, xs: &[InputToken]) -> Result<ExpectedLosses> {
    let n = labels(class)?;
    let horizon = xs.len();
    if horizon > MAX_ENUMERATION_HORIZON {
        return Err(Error::InvalidScenario(format!(
            "enumeration horizon {horizon} exceeds {MAX_ENUMERATION_HORIZON}"
        )));
    }
    let entries = class
        .entries()
        .ok_or_else(|| Error::InvalidClass("enumeration needs a finite class".into()))?;
    if true_index >= entries.len() {
        return Err(Error::InvalidScenario(format!("no member {true_index}")));
    }
    // tables[k][t] = ν_k(·|x_t)
    let tables: Vec<Vec<Vec<f64>>> = entries
        .iter()
        .map(|e| xs.iter().map(|x| label_probs(e.model.as_ref(), x, n)).collect())
        .collect::<Result<_>>()?;
    let weights: Vec<f64> = entries.iter().map(|e| e.weight).collect();
    let truth = &tables[true_index];

    let mut expected = [0.0; 7];
    let mut seq = vec![0usize; horizon];
    for code in 0..n.pow(horizon as u32) {
        let mut c = code;
        for slot in seq.iter_mut() {
            *slot = c % n;
            c /= n;
        }
        let prob: f64 = seq.iter().enumerate().map(|(t, &y)| truth[t][y]).product();
        if prob == 0.0 {
            continue;
        }
        let mut joint = weights.clone();
        for t in 0..horizon {
            let mu = &truth[t];
            let total: f64 = joint.iter().sum();
            let mut star = 0;
            for k in 1..joint.len() {
                if joint[k] > joint[star] {
                    star = k;
                }
            }
            let bayes: Vec<f64> = (0..n)
                .map(|y| joint.iter().zip(&tables).map(|(j, tab)| j * tab[t][y]).sum::<f64>() / total)
                .collect();
            let stat = tables[star][t].clone();
            let dynamic: Vec<f64> = (0..n)
                .map(|y| {
                    joint
                        .iter()
                        .zip(&tables)
                        .map(|(j, tab)| j * tab[t][y])
                        .fold(0.0, f64::max)
                        / joint[star]
                })
                .collect();
            let mass: f64 = dynamic.iter().sum();
            let normalized: Vec<f64> = dynamic.iter().map(|d| d / mass).collect();
            for (pred, h2_q, sq_q) in [
                (&bayes, ClassQuantity::HellingerBayes, None),
                (&stat, ClassQuantity::HellingerStatic, Some(ClassQuantity::QuadraticStatic)),
                (&dynamic, ClassQuantity::HellingerDynamic, Some(ClassQuantity::QuadraticDynamic)),
                (&normalized, ClassQuantity::HellingerNormalized, Some(ClassQuantity::QuadraticNormalized)),
            ] {
                let mut h2 = 0.0;
                let mut sq = 0.0;
                for y in 0..n {
                    h2 += (mu[y].sqrt() - pred[y].sqrt()).powi(2);
                    sq += (mu[y] - pred[y]).powi(2);
                }
                expected[h2_q.index()] += prob * h2;
                if let Some(q) = sq_q {
                    expected[q.index()] += prob * sq;
                }
            }
            for (j, tab) in joint.iter_mut().zip(&tables) {
                *j *= tab[t][seq[t]];
            }
        }
    }
    Ok(expected)
}

/// Five three-label models over three input symbols, uniform prior `0.2`.
pub fn standard_classification_class() -> Arc<ModelClass> {
    let tables = [
        [[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.1, 0.2, 0.7]],
        [[0.3, 0.6, 0.1], [0.2, 0.3, 0.5], [0.7, 0.2, 0.1]],
        [[0.1, 0.3, 0.6], [0.5, 0.2, 0.3], [0.2, 0.7, 0.1]],
        [[0.4, 0.4, 0.2], [0.3, 0.4, 0.3], [0.1, 0.5, 0.4]],
        [[0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5]],
    ];
    let entries = tables
        .iter()
        .map(|rows| {
            let model = TabularClassificationModel::from_table(rows.iter().map(|r| r.to_vec()).collect()).expect("valid table");
            ClassEntry::new(0.2, model)
        })
        .collect();
    Arc::new(ModelClass::finite(entries).expect("valid class"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Outcome;
    use crate::simulate::{InputProcess, PredictorSet};

    fn two_label(tables: &[[f64; 2]]) -> Arc<ModelClass> {
        let w = 1.0 / tables.len() as f64;
        Arc::new(
            ModelClass::finite(
                tables
                    .iter()
                    .map(|r| ClassEntry::new(w, TabularClassificationModel::from_table(vec![r.to_vec()]).unwrap()))
                    .collect(),
            )
            .unwrap(),
        )
    }

    fn scenario(class: Arc<ModelClass>, inputs: InputProcess, horizon: usize, runs: usize) -> Scenario {
        Scenario {
            name: "cls".into(),
            class,
            true_index: 0,
            inputs,
            horizon,
            runs,
            seed: 3,
            predictors: PredictorSet::ALL,
            quadrature: QuadratureSpec::default(),
        }
    }

    #[test]
    fn singleton_predicts_its_own_table() {
        let class = two_label(&[[0.3, 0.7]]);
        let state = PredictorState::new(class).unwrap();
        let x = InputToken::symbol(0);
        for kind in [
            PredictorKind::Bayes,
            PredictorKind::Static,
            PredictorKind::Dynamic,
            PredictorKind::Normalized,
        ] {
            assert_eq!(classify_predict(&state, &x, kind).unwrap(), vec![0.3, 0.7]);
        }
    }

    #[test]
    fn symmetric_models_average() {
        let class = two_label(&[[0.2, 0.8], [0.8, 0.2]]);
        let mut state = PredictorState::new(class).unwrap();
        let x = InputToken::symbol(0);
        state.update(&x, Outcome::Label(0)).unwrap();
        state.update(&x, Outcome::Label(1)).unwrap();
        let p = classify_predict(&state, &x, PredictorKind::Bayes).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dynamic_and_normalized_sums() {
        let class = two_label(&[[0.2, 0.8], [0.6, 0.4]]);
        let state = PredictorState::new(class).unwrap();
        let x = InputToken::symbol(0);
        // Uniform weights, n = 0: dynamic(y) = max_k ν_k(y) = (0.6, 0.8).
        let d = classify_predict(&state, &x, PredictorKind::Dynamic).unwrap();
        assert_eq!(d, vec![0.6, 0.8]);
        let n = classify_predict(&state, &x, PredictorKind::Normalized).unwrap();
        assert!((n[0] - 0.6 / 1.4).abs() < 1e-15);
        assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_sums_are_zero() {
        let class = two_label(&[[0.3, 0.7]]);
        let report = run_classification(&scenario(class, InputProcess::IidSymbols { count: 1 }, 10, 4)).unwrap();
        assert!(report.quantities.iter().all(|q| q.mean == 0.0 && q.pass));
    }

    #[test]
    fn regression_class_is_rejected() {
        let s = crate::simulate::standard_scenario(3, 1, 0, PredictorSet::ALL);
        assert_eq!(classification_runs(&s).unwrap_err(), Error::SpaceMismatch);
    }

    #[test]
    fn enumeration_at_horizon_one_is_the_prior_prediction() {
        let class = two_label(&[[0.2, 0.8], [0.6, 0.4]]);
        let xs = [InputToken::symbol(0)];
        let e = enumerate_expected_losses(&class, 0, &xs).unwrap();
        let bayes = [0.4f64, 0.6];
        let direct: f64 = [0.2f64, 0.8].iter().zip(bayes).map(|(m, b)| (m.sqrt() - b.sqrt()).powi(2)).sum();
        assert!((e[ClassQuantity::HellingerBayes.index()] - direct).abs() < 1e-15);
        // n = 0 tie picks member 0, the truth.
        assert_eq!(e[ClassQuantity::HellingerStatic.index()], 0.0);
        assert!(enumerate_expected_losses(&class, 0, &vec![InputToken::symbol(0); 9]).is_err());
    }

    #[test]
    fn standard_class_is_valid() {
        let class = standard_classification_class();
        assert_eq!(class.len(), Some(5));
        assert_eq!(class.outcome_space(), OutcomeSpace::Labels(3));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig { cases: 64, .. ProptestConfig::default() })]

            #[test]
            fn emitted_vectors_are_valid(ys in prop::collection::vec(0usize..3, 0..30), sym in 0u32..3) {
                let class = standard_classification_class();
                let mut state = PredictorState::new(class).unwrap();
                for (i, y) in ys.iter().enumerate() {
                    state.update(&InputToken::symbol(i as u32 % 3), Outcome::Label(*y)).unwrap();
                }
                let x = InputToken::symbol(sym);
                for kind in [PredictorKind::Bayes, PredictorKind::Static, PredictorKind::Normalized] {
                    let p = classify_predict(&state, &x, kind).unwrap();
                    prop_assert!(p.iter().all(|v| *v >= 0.0));
                    prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                }
                let d = classify_predict(&state, &x, PredictorKind::Dynamic).unwrap();
                prop_assert!(d.iter().sum::<f64>() >= 1.0 - 1e-12);
            }
        }
    }
}
