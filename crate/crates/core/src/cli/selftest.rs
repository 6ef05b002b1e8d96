//! Quick invariant suite behind the `selftest` command.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classify::{classification_runs, enumerate_expected_losses, ClassQuantity};
use crate::density::{Component, PredictiveDensity};
use crate::metrics::{abs_distance, hellinger_sq, hellinger_sq_gaussian, kl_divergence, kl_gaussian};
use crate::model::{log_joint, ClassEntry, Gaussian, InputToken, ModelClass, Outcome, TabularClassificationModel};
use crate::predictor::PredictorState;
use crate::quadrature::QuadratureSpec;
use crate::simulate::{
    check_sse_selection, generate_stream, mean_and_se, standard_scenario, InputProcess, PredictorSet, Scenario,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> crate::Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn random_gaussian(rng: &mut ChaCha8Rng) -> (f64, f64) {
    (rng.random_range(-4.0..4.0), rng.random_range(0.2..3.0))
}

fn quadrature_only(m: f64, s: f64) -> crate::Result<PredictiveDensity> {
    Ok(PredictiveDensity::mixture(vec![(0.0, Component::Gaussian(Gaussian::new(m, s)?))]))
}

pub fn run_all() -> Vec<Check> {
    let quad = QuadratureSpec::default();
    let mut out = Vec::new();

    out.push(check("closed forms match quadrature", || {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let (m1, s1) = random_gaussian(&mut rng);
            let (m2, s2) = random_gaussian(&mut rng);
            let (p, q) = (quadrature_only(m1, s1)?, quadrature_only(m2, s2)?);
            let h = hellinger_sq_gaussian(m1, s1, m2, s2)?;
            worst = worst.max((h - hellinger_sq(&p, &q, &quad)?).abs());
            let k = kl_gaussian(m1, s1, m2, s2)?;
            worst = worst.max((k - kl_divergence(&p, &q, &quad)?).abs() / k.max(1.0));
        }
        Ok((worst <= 1e-7, format!("max deviation {worst:.3e}")))
    }));

    out.push(check("h2 <= KL and h2 <= L1", || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut violations = 0;
        for _ in 0..1000 {
            let (m1, s1) = random_gaussian(&mut rng);
            let (m2, s2) = random_gaussian(&mut rng);
            let p = PredictiveDensity::gaussian(Gaussian::new(m1, s1)?);
            let q = PredictiveDensity::gaussian(Gaussian::new(m2, s2)?);
            let h = hellinger_sq(&p, &q, &quad)?;
            if h > kl_divergence(&p, &q, &quad)? + 1e-9 || h > abs_distance(&p, &q, &quad)? + 1e-9 {
                violations += 1;
            }
        }
        Ok((violations == 0, format!("{violations} violations in 1000 pairs")))
    }));

    out.push(check("predictor dominance and envelope sandwich", || {
        let scenario = standard_scenario(25, 20, 3, PredictorSet::ALL);
        let entries = scenario.class.entries().unwrap_or_default();
        let mut failures = 0;
        for run in 0..scenario.runs as u64 {
            let stream = generate_stream(&scenario, run)?;
            let (xs, ys): (Vec<InputToken>, Vec<Outcome>) = stream.into_iter().unzip();
            let state = PredictorState::from_history(Arc::clone(&scenario.class), &xs, &ys)?;
            for e in entries {
                let l = e.weight.ln() + log_joint(e.model.as_ref(), &xs, &ys)?;
                if state.log_mixture() < l - 1e-12 || state.log_mdl() < l - 1e-12 {
                    failures += 1;
                }
            }
            if state.log_mdl() > state.log_mixture() + 1e-12 {
                failures += 1;
            }
            let x = InputToken::scalar(0.4);
            let stat = state.static_predict(&x)?;
            let dynamic = state.dynamic_predict(&x, &quad)?;
            for k in -20..=20 {
                let y = k as f64 * 0.5;
                let (s, d) = (stat.ln_eval_real(y), dynamic.ln_eval_real(y));
                if s > d + 1e-12 || d > scenario.class.global_bound().ln() + 1e-12 {
                    failures += 1;
                }
            }
        }
        Ok((failures == 0, format!("{failures} failures over {} histories", scenario.runs)))
    }));

    out.push(check("dynamic normalization", || {
        let scenario = standard_scenario(30, 1, 4, PredictorSet::ALL);
        let mut state = PredictorState::new(Arc::clone(&scenario.class))?;
        let mut worst: f64 = 0.0;
        let mut min_raw = f64::INFINITY;
        for (x, y) in generate_stream(&scenario, 0)? {
            let raw = state.dynamic_predict(&x, &quad)?;
            min_raw = min_raw.min(raw.integrate_mass(&quad)?);
            worst = worst.max((raw.normalize()?.integrate_mass(&quad)? - 1.0).abs());
            state.update(&x, y)?;
        }
        Ok((
            worst <= 1e-6 && min_raw >= 1.0 - 1e-6,
            format!("max |mass - 1| {worst:.3e}, min raw mass {min_raw:.9}"),
        ))
    }));

    out.push(check("classification enumeration oracle", || {
        let a = TabularClassificationModel::from_table(vec![vec![0.7, 0.3], vec![0.4, 0.6]])?;
        let b = TabularClassificationModel::from_table(vec![vec![0.5, 0.5], vec![0.8, 0.2]])?;
        let class = Arc::new(ModelClass::finite(vec![ClassEntry::new(0.5, a), ClassEntry::new(0.5, b)])?);
        let cycle = vec![InputToken::symbol(0), InputToken::symbol(1), InputToken::symbol(0)];
        let exact = enumerate_expected_losses(&class, 1, &cycle)?;
        let scenario = Scenario {
            name: "oracle".into(),
            class,
            true_index: 1,
            inputs: InputProcess::FixedCycle(cycle),
            horizon: 3,
            runs: 4000,
            seed: 5,
            predictors: PredictorSet::ALL,
            quadrature: quad,
        };
        let ledgers = classification_runs(&scenario)?;
        let mut worst: f64 = 0.0;
        for q in ClassQuantity::ALL {
            let totals: Vec<f64> = ledgers.iter().filter_map(|l| l.total(q)).collect();
            let (mean, se) = mean_and_se(&totals);
            worst = worst.max((mean - exact[q.index()]).abs() / (se + 1e-12));
        }
        Ok((worst <= 3.0, format!("max deviation {worst:.2} standard errors")))
    }));

    out.push(check("penalized SSE selects the MDL member", || {
        let scenario = standard_scenario(60, 8, 6, PredictorSet::ALL);
        let report = check_sse_selection(&scenario)?;
        Ok((
            report.mismatches == 0,
            format!("{} mismatches in {} prefixes", report.mismatches, report.prefixes_checked),
        ))
    }));

    out
}
