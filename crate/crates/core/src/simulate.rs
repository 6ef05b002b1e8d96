//! Stream generation, the online prediction loop and Monte Carlo bound checks.
//!
//! Run `r` of a scenario draws from `ChaCha8Rng::seed_from_u64(seed)` on
//! stream `r`, so each run is reproducible on its own and runs can execute in
//! any order or on any number of workers.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{hellinger_sq, kl_divergence, LossLedger, LossRecord, Quantity};
use crate::model::{
    build_linear_rational_class, ConditionalModel, InputToken, ModelClass, Outcome, Prior, DEFAULT_SIGMA_FLOOR,
};
use crate::predictor::{model_predict, penalized_sse_select, PredictorState};
use crate::quadrature::QuadratureSpec;

/// How the inputs `x_t` are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum InputProcess {
    IidUniform { low: f64, high: f64 },
    FixedCycle(Vec<InputToken>),
    /// `x_1 = 0`, `x_{t+1} = x_t + step·N(0, 1)`.
    GaussianWalk { step: f64 },
    /// Symbols drawn uniformly from `0..count`.
    IidSymbols { count: u32 },
}

impl InputProcess {
    fn validate(&self) -> Result<()> {
        match self {
            InputProcess::IidUniform { low, high } if !(low.is_finite() && high.is_finite() && low < high) => Err(
                Error::InvalidScenario(format!("iid-uniform needs low < high, got [{low}, {high}]")),
            ),
            InputProcess::FixedCycle(c) if c.is_empty() => {
                Err(Error::InvalidScenario("fixed-cycle needs at least one input".into()))
            }
            InputProcess::GaussianWalk { step } if !(step.is_finite() && *step >= 0.0) => {
                Err(Error::InvalidScenario(format!("gaussian-walk step must be >= 0, got {step}")))
            }
            InputProcess::IidSymbols { count: 0 } => Err(Error::InvalidScenario("iid-symbols needs count >= 1".into())),
            _ => Ok(()),
        }
    }
}

struct InputDraw<'a> {
    process: &'a InputProcess,
    walk: f64,
}

impl InputDraw<'_> {
    fn next(&mut self, t: usize, rng: &mut ChaCha8Rng) -> InputToken {
        let token = match self.process {
            InputProcess::IidUniform { low, high } => InputToken::scalar(rng.random_range(*low..*high)),
            InputProcess::FixedCycle(cycle) => cycle[(t - 1) % cycle.len()].clone(),
            InputProcess::GaussianWalk { step } => {
                if t > 1 {
                    let z: f64 = rng.sample(StandardNormal);
                    self.walk += step * z;
                }
                InputToken::scalar(self.walk)
            }
            InputProcess::IidSymbols { count } => InputToken::symbol(rng.random_range(0..*count)),
        };
        token.at_step(t as u64)
    }
}

/// Which predictors a run evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictorSet {
    pub bayes: bool,
    pub static_mdl: bool,
    pub dynamic: bool,
    pub normalized: bool,
}

impl PredictorSet {
    pub const ALL: Self = Self {
        bayes: true,
        static_mdl: true,
        dynamic: true,
        normalized: true,
    };

    pub const NONE: Self = Self {
        bayes: false,
        static_mdl: false,
        dynamic: false,
        normalized: false,
    };

    /// Parses a comma-separated list of `bayes`, `static`, `dynamic`, `normalized`.
    pub fn parse(list: &str) -> Result<Self> {
        let mut set = Self::NONE;
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "bayes" => set.bayes = true,
                "static" => set.static_mdl = true,
                "dynamic" => set.dynamic = true,
                "normalized" => set.normalized = true,
                other => return Err(Error::InvalidScenario(format!("unknown predictor '{other}'"))),
            }
        }
        Ok(set)
    }

    pub fn names(&self) -> Vec<&'static str> {
        [
            (self.bayes, "bayes"),
            (self.static_mdl, "static"),
            (self.dynamic, "dynamic"),
            (self.normalized, "normalized"),
        ]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect()
    }

    /// Whether the ledger column for `q` is populated.
    pub fn tracks(&self, q: Quantity) -> bool {
        match q {
            Quantity::MuXi => self.bayes,
            Quantity::MuRhoBar | Quantity::KlMuRhoBar => self.normalized,
            Quantity::RhoBarRho => self.normalized && self.dynamic,
            Quantity::RhoStatic => self.dynamic && self.static_mdl,
            Quantity::MuStatic => self.static_mdl,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub class: Arc<ModelClass>,
    /// Index of the true model `μ` in `class`.
    pub true_index: usize,
    pub inputs: InputProcess,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub predictors: PredictorSet,
    pub quadrature: QuadratureSpec,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::InvalidScenario("horizon must be ≥ 1".into()));
        }
        if self.runs < 1 {
            return Err(Error::InvalidScenario("runs must be ≥ 1".into()));
        }
        if self.class.entry(self.true_index)?.is_none() {
            return Err(Error::InvalidScenario(format!(
                "true model index {} is outside the class",
                self.true_index
            )));
        }
        self.inputs.validate()?;
        self.quadrature.validate()
    }

    pub fn true_model(&self) -> Result<Arc<dyn ConditionalModel>> {
        self.class
            .entry(self.true_index)?
            .map(|e| e.model)
            .ok_or_else(|| Error::InvalidScenario(format!("no member {}", self.true_index)))
    }

    /// Prior weight of the true model, read from the class itself.
    pub fn w_mu(&self) -> Result<f64> {
        self.class
            .weight(self.true_index)?
            .ok_or_else(|| Error::InvalidScenario(format!("no member {}", self.true_index)))
    }
}

/// The ten-member class `f(x) = a·x + b`, `a ∈ {−2..2}`, `b ∈ {−1, 1}`, `σ = 1`, uniform prior.
pub fn standard_class() -> Arc<ModelClass> {
    use num_rational::Rational64;
    let mut grid = Vec::new();
    for a in -2..=2 {
        for b in [-1, 1] {
            grid.push((Rational64::from_integer(a), Rational64::from_integer(b)));
        }
    }
    Arc::new(build_linear_rational_class(&grid, 1.0, Prior::Uniform, DEFAULT_SIGMA_FLOOR).expect("valid grid"))
}

/// The standard class with iid-uniform inputs on `[−1, 1]`; true model `a = 1, b = 1`.
pub fn standard_scenario(horizon: usize, runs: usize, seed: u64, predictors: PredictorSet) -> Scenario {
    Scenario {
        name: "standard".into(),
        class: standard_class(),
        true_index: 7,
        inputs: InputProcess::IidUniform { low: -1.0, high: 1.0 },
        horizon,
        runs,
        seed,
        predictors,
        quadrature: QuadratureSpec::default(),
    }
}

pub(crate) fn run_rng(seed: u64, run_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_id);
    rng
}

/// `(x_t, y_t)` for `t = 1..=T`, a pure function of `(seed, run_id)`.
pub fn generate_stream(scenario: &Scenario, run_id: u64) -> Result<Vec<(InputToken, Outcome)>> {
    let mu = scenario.true_model()?;
    let mut rng = run_rng(scenario.seed, run_id);
    let mut draw = InputDraw {
        process: &scenario.inputs,
        walk: 0.0,
    };
    let mut out = Vec::with_capacity(scenario.horizon);
    for t in 1..=scenario.horizon {
        let x = draw.next(t, &mut rng);
        let y = mu.sample(&x, &mut rng).map_err(|e| e.in_run(run_id, t))?;
        out.push((x, y));
    }
    Ok(out)
}

/// Runs the online protocol once: predict at `x_t` from the past, score, then absorb `y_t`.
pub fn run_online(scenario: &Scenario, run_id: u64) -> Result<LossLedger> {
    let mu = scenario.true_model()?;
    let stream = generate_stream(scenario, run_id)?;
    let mut state = PredictorState::new(Arc::clone(&scenario.class))?;
    let mut ledger = LossLedger::new(run_id);
    for (i, (x, y)) in stream.iter().enumerate() {
        let t = i + 1;
        let record = step_losses(&state, &mu, x, t, scenario).map_err(|e| e.in_run(run_id, t))?;
        ledger.records.push(record);
        state.update(x, *y).map_err(|e| e.in_run(run_id, t))?;
    }
    Ok(ledger)
}

fn step_losses(
    state: &PredictorState,
    mu: &Arc<dyn ConditionalModel>,
    x: &InputToken,
    t: usize,
    scenario: &Scenario,
) -> Result<LossRecord> {
    let p = scenario.predictors;
    let quad = &scenario.quadrature;
    let truth = model_predict(mu, x)?;
    let mut rec = LossRecord::new(t);
    if p.bayes {
        rec.set(Quantity::MuXi, hellinger_sq(&truth, &state.bayes_predict(x)?, quad)?);
    }
    let stat = if p.static_mdl { Some(state.static_predict(x)?) } else { None };
    if let Some(s) = &stat {
        rec.set(Quantity::MuStatic, hellinger_sq(&truth, s, quad)?);
    }
    if p.dynamic || p.normalized {
        let dynamic = state.dynamic_predict(x, quad)?;
        if p.dynamic {
            if let Some(s) = &stat {
                rec.set(Quantity::RhoStatic, hellinger_sq(&dynamic, s, quad)?);
            }
        }
        if p.normalized {
            let norm = dynamic.normalize()?;
            rec.set(Quantity::MuRhoBar, hellinger_sq(&truth, &norm, quad)?);
            rec.set(Quantity::KlMuRhoBar, kl_divergence(&truth, &norm, quad)?);
            if p.dynamic {
                rec.set(Quantity::RhoBarRho, hellinger_sq(&norm, &dynamic, quad)?);
            }
        }
    }
    Ok(rec)
}

/// All runs, in run-index order.
pub fn simulate_runs(scenario: &Scenario) -> Result<Vec<LossLedger>> {
    scenario.validate()?;
    (0..scenario.runs as u64)
        .into_par_iter()
        .map(|r| run_online(scenario, r))
        .collect()
}

/// Mean, standard error, bound and verdict for one cumulative quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantityReport {
    pub name: String,
    pub mean: f64,
    /// Sample standard deviation over runs divided by `√M`; NaN when `M < 2`.
    pub std_err: f64,
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
}

impl QuantityReport {
    pub fn from_totals(name: impl Into<String>, totals: &[f64], bound: f64) -> Self {
        let (mean, std_err) = mean_and_se(totals);
        Self {
            name: name.into(),
            mean,
            std_err,
            bound,
            slack: bound - mean,
            pass: mean <= bound,
        }
    }

    /// Slack as a fraction of the bound.
    pub fn relative_slack(&self) -> f64 {
        if self.bound == 0.0 {
            0.0
        } else {
            self.slack / self.bound
        }
    }
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Fraction of runs whose per-step loss stayed below `threshold` after step `after`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailStatistic {
    pub after: usize,
    pub threshold: f64,
    pub fraction_below: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub scenario: String,
    pub w_mu: f64,
    pub runs: usize,
    pub horizon: usize,
    pub quantities: Vec<QuantityReport>,
    /// `max_{t > T/2} h²_t(μ, ϱ^static)` below 0.01, when static MDL is tracked.
    pub tail: Option<TailStatistic>,
    /// Runs breaking the cumulative triangle composition.
    pub triangle_violations: usize,
    /// Steps with a negative, non-finite or out-of-range entry.
    pub sandwich_violations: usize,
}

impl BoundReport {
    pub fn all_pass(&self) -> bool {
        self.quantities.iter().all(|q| q.pass) && self.triangle_violations == 0 && self.sandwich_violations == 0
    }

    pub fn quantity(&self, name: &str) -> Option<&QuantityReport> {
        self.quantities.iter().find(|q| q.name == name)
    }
}

pub const TAIL_THRESHOLD: f64 = 0.01;

/// Aggregates ledgers (in the given order) into a [`BoundReport`].
pub fn summarize(scenario: &Scenario, ledgers: &[LossLedger]) -> Result<BoundReport> {
    let w_mu = scenario.w_mu()?;
    let mut quantities = Vec::new();
    for q in Quantity::ALL {
        if !scenario.predictors.tracks(q) {
            continue;
        }
        let totals: Option<Vec<f64>> = ledgers.iter().map(|l| l.total(q)).collect();
        if let Some(totals) = totals {
            quantities.push(QuantityReport::from_totals(q.column(), &totals, q.bound(w_mu)));
        }
    }
    let after = scenario.horizon / 2;
    let tail = if scenario.predictors.static_mdl && !ledgers.is_empty() {
        let below = ledgers
            .iter()
            .filter(|l| l.tail_max(Quantity::MuStatic, after).is_some_and(|m| m < TAIL_THRESHOLD))
            .count();
        Some(TailStatistic {
            after,
            threshold: TAIL_THRESHOLD,
            fraction_below: below as f64 / ledgers.len() as f64,
        })
    } else {
        None
    };
    let triangle_violations = ledgers.iter().filter(|l| !triangle_holds(l)).count();
    let sandwich_violations = ledgers
        .iter()
        .flat_map(|l| &l.records)
        .filter(|r| !sandwich_holds(r))
        .count();
    Ok(BoundReport {
        scenario: scenario.name.clone(),
        w_mu,
        runs: ledgers.len(),
        horizon: scenario.horizon,
        quantities,
        tail,
        triangle_violations,
        sandwich_violations,
    })
}

fn triangle_holds(l: &LossLedger) -> bool {
    let totals = [
        Quantity::MuStatic,
        Quantity::MuRhoBar,
        Quantity::RhoBarRho,
        Quantity::RhoStatic,
    ]
    .map(|q| l.total(q));
    match totals {
        [Some(lhs), Some(a), Some(b), Some(c)] => lhs.sqrt() <= a.sqrt() + b.sqrt() + c.sqrt() + 1e-6,
        _ => true,
    }
}

fn sandwich_holds(r: &LossRecord) -> bool {
    let finite = r.values.iter().flatten().all(|v| v.is_finite() && *v >= 0.0);
    finite && r.get(Quantity::MuXi).is_none_or(|v| v <= 2.0 + 1e-12)
}

/// Simulates every run and summarizes.
pub fn monte_carlo(scenario: &Scenario) -> Result<BoundReport> {
    summarize(scenario, &simulate_runs(scenario)?)
}

/// Selection equivalence, cumulative squared-mean-error sum and a
/// selection-convergence diagnostic for a constant-σ Gaussian class.
#[derive(Debug, Clone, PartialEq)]
pub struct SseSelectionReport {
    pub prefixes_checked: usize,
    pub mismatches: usize,
    /// `Σ_t 2[1 − exp(−(g*(x_t) − f(x_t))²/(8σ²))]` over runs.
    pub mean_error_sum: QuantityReport,
    /// Runs whose selections over the last quarter all equal `μ`.
    pub converged_fraction: f64,
}

struct RunCheck {
    prefixes: usize,
    mismatches: usize,
    sum: f64,
    converged: bool,
}

pub fn check_sse_selection(scenario: &Scenario) -> Result<SseSelectionReport> {
    scenario.validate()?;
    let sigma = scenario.class.shared_sigma().ok_or(Error::NonConstantSigma)?;
    let w_mu = scenario.w_mu()?;
    let checks: Vec<RunCheck> = (0..scenario.runs as u64)
        .into_par_iter()
        .map(|r| sse_selection_run(scenario, sigma, r))
        .collect::<Result<_>>()?;
    let sums: Vec<f64> = checks.iter().map(|c| c.sum).collect();
    Ok(SseSelectionReport {
        prefixes_checked: checks.iter().map(|c| c.prefixes).sum(),
        mismatches: checks.iter().map(|c| c.mismatches).sum(),
        mean_error_sum: QuantityReport::from_totals("sq_mean_error", &sums, 21.0 / w_mu),
        converged_fraction: checks.iter().filter(|c| c.converged).count() as f64 / checks.len() as f64,
    })
}

fn sse_selection_run(scenario: &Scenario, sigma: f64, run_id: u64) -> Result<RunCheck> {
    let mu = scenario.true_model()?;
    let stream = generate_stream(scenario, run_id)?;
    let xs: Vec<InputToken> = stream.iter().map(|(x, _)| x.clone()).collect();
    let ys: Vec<f64> = stream
        .iter()
        .map(|(_, y)| y.as_real().ok_or(Error::OutcomeMismatch { expected: "real", got: "label" }))
        .collect::<Result<_>>()?;
    let mut state = PredictorState::new(Arc::clone(&scenario.class))?;
    let mut check = RunCheck {
        prefixes: 0,
        mismatches: 0,
        sum: 0.0,
        converged: true,
    };
    let last_quarter = scenario.horizon - scenario.horizon / 4;
    for t in 1..=scenario.horizon {
        let n = t - 1;
        let by_mdl = state.mdl_select()?.index;
        let by_sse = penalized_sse_select(&scenario.class, &xs[..n], &ys[..n])?;
        check.prefixes += 1;
        if by_mdl != by_sse {
            check.mismatches += 1;
        }
        let x = &xs[n];
        let g = state.static_predict(x)?.as_gaussian();
        let f = model_predict(&mu, x)?.as_gaussian();
        let (Some(g), Some(f)) = (g, f) else {
            return Err(Error::NonConstantSigma);
        };
        let d = g.mean - f.mean;
        check.sum += 2.0 * (1.0 - (-d * d / (8.0 * sigma * sigma)).exp());
        if t > last_quarter && by_mdl != scenario.true_index {
            check.converged = false;
        }
        state
            .update(x, Outcome::Real(ys[n]))
            .map_err(|e| e.in_run(run_id, t))?;
    }
    Ok(check)
}
