//! Command implementations behind the `mdlsim` binary.

pub mod config;
pub mod output;
pub mod report;
pub mod selftest;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::classify::{classification_runs, summarize_classification};
use crate::simulate::{simulate_runs, summarize, BoundReport};
use config::{LoadedConfig, Overrides, ScenarioKind};

/// Process exit codes.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_BOUND_VIOLATION: i32 = 2;

/// Environment variable naming the worker-thread count.
pub const WORKERS_ENV: &str = "MDLSIM_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}:{line}: {message}", path.display())]
    Config { path: PathBuf, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("{}: schema mismatch: {message}", path.display())]
    Schema { path: PathBuf, message: String },
    #[error("unknown scenario '{name}' (known: {known})")]
    UnknownScenario { name: String, known: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] crate::Error),
}

#[derive(Debug, Clone)]
pub struct RunRequest {
    pub config: PathBuf,
    pub scenario: String,
    pub overrides: Overrides,
    /// Defaults to `<output_dir>/<scenario>`.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub report: BoundReport,
    pub summary: String,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.all_pass() {
            EXIT_PASS
        } else {
            EXIT_BOUND_VIOLATION
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Executes one scenario and writes the ledger, bounds and summary files.
pub fn run_command(req: &RunRequest) -> Result<RunOutcome, CliError> {
    let loaded = LoadedConfig::read(&req.config)?;
    let resolved = loaded.resolve(&req.scenario, &req.overrides)?;
    let out_dir = req
        .out
        .clone()
        .unwrap_or_else(|| loaded.config.output_dir.join(&req.scenario));
    create_dir(&out_dir)?;
    let scenario = &resolved.scenario;
    let report = match resolved.kind {
        ScenarioKind::Regression => {
            let ledgers = simulate_runs(scenario)?;
            output::write_ledgers(&out_dir.join(output::LEDGER_FILE), &ledgers)?;
            summarize(scenario, &ledgers)?
        }
        ScenarioKind::Classification => {
            let ledgers = classification_runs(scenario)?;
            output::write_class_ledgers(&out_dir.join(output::CLASS_LEDGER_FILE), &ledgers)?;
            summarize_classification(scenario, &ledgers)?
        }
    };
    output::write_bounds(&out_dir.join(output::BOUNDS_FILE), &report)?;
    let summary = output::summary_text(&report);
    write_file(&out_dir.join(output::SUMMARY_FILE), &summary)?;
    Ok(RunOutcome {
        out_dir,
        report,
        summary,
    })
}

#[derive(Debug, Clone)]
pub struct ReportOutcome {
    pub text: String,
    pub charts: Vec<PathBuf>,
}

/// Summarizes ledger directories; with `svg_dir`, writes one chart per column.
pub fn report_command(inputs: &[PathBuf], svg_dir: Option<&Path>) -> Result<ReportOutcome, CliError> {
    if inputs.is_empty() {
        return Err(CliError::Usage("report needs at least one --in directory".into()));
    }
    let ledgers = inputs
        .iter()
        .map(|d| report::read_ledger_dir(d))
        .collect::<Result<Vec<_>, _>>()?;
    let mut charts = Vec::new();
    if let Some(dir) = svg_dir {
        create_dir(dir)?;
        for (name, svg) in report::render_charts(&ledgers) {
            let path = dir.join(format!("{name}.svg"));
            write_file(&path, &svg)?;
            charts.push(path);
        }
    }
    Ok(ReportOutcome {
        text: report::report_text(&ledgers),
        charts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::QuantityReport;

    fn outcome(mean: f64) -> RunOutcome {
        RunOutcome {
            out_dir: PathBuf::new(),
            report: BoundReport {
                scenario: "x".into(),
                w_mu: 0.5,
                runs: 2,
                horizon: 1,
                quantities: vec![QuantityReport::from_totals("h2_mu_xi", &[mean, mean], 2f64.ln())],
                tail: None,
                triangle_violations: 0,
                sandwich_violations: 0,
            },
            summary: String::new(),
        }
    }

    #[test]
    fn exit_codes_follow_the_verdict() {
        assert_eq!(outcome(0.1).exit_code(), EXIT_PASS);
        assert_eq!(outcome(5.0).exit_code(), EXIT_BOUND_VIOLATION);
    }

    #[test]
    fn empty_report_input_is_rejected() {
        assert!(matches!(report_command(&[], None), Err(CliError::Usage(_))));
    }
}
