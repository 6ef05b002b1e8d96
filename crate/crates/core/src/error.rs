use thiserror::Error;

/// Errors raised by models, predictors, metrics and the simulation harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("model rejects input payload: expected {expected}, got {got}")]
    PayloadMismatch {
        expected: &'static str,
        got: &'static str,
    },
    #[error("model rejects outcome: expected {expected}, got {got}")]
    OutcomeMismatch {
        expected: &'static str,
        got: &'static str,
    },
    #[error("input symbol {symbol} out of range for a table with {rows} rows")]
    SymbolOutOfRange { symbol: u32, rows: usize },
    #[error("non-finite outcome value {0}")]
    NonFiniteOutcome(f64),
    #[error("label {label} out of range for {count} labels")]
    LabelOutOfRange { label: usize, count: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("sigma {sigma} is below the floor {floor}")]
    SigmaBelowFloor { sigma: f64, floor: f64 },
    #[error("invalid model class: {0}")]
    InvalidClass(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("mixture support exhausted at step {step}: every model assigns zero density to the observation")]
    SupportExhausted { step: usize },
    #[error(
        "quadrature did not converge on [{lo}, {hi}] (estimate {estimate}, error {error_estimate}, depth {depth})"
    )]
    QuadratureNonConvergence {
        lo: f64,
        hi: f64,
        estimate: f64,
        error_estimate: f64,
        depth: u32,
    },
    #[error("integrand is not finite at y = {0}")]
    NonFiniteIntegrand(f64),
    #[error("invalid quadrature spec: {0}")]
    InvalidQuadrature(String),
    #[error("cannot normalize a density with total mass {0}")]
    DegenerateMass(f64),
    #[error("densities live on different outcome spaces")]
    SpaceMismatch,
    #[error("class does not share a single sigma across its members")]
    NonConstantSigma,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("run {run_id}, step {step}: {source}")]
    InRun {
        run_id: u64,
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_run(self, run_id: u64, step: usize) -> Self {
        Error::InRun {
            run_id,
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
