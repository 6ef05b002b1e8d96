use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use discrete_mdl::cli::config::Overrides;
use discrete_mdl::cli::{self, RunRequest, EXIT_BOUND_VIOLATION, EXIT_ERROR, EXIT_PASS, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "mdlsim", version, about = "Monte Carlo checks of Bayes and MDL prediction bounds")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write ledger, bounds and summary files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<i64>,
        #[arg(long)]
        horizon: Option<i64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated subset of bayes,static,dynamic,normalized.
        #[arg(long)]
        predictors: Option<String>,
    },
    /// Summarize ledgers from one or more run directories.
    Report {
        #[arg(long = "in", num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Also write one SVG chart per quantity.
        #[arg(long)]
        svg: bool,
        /// Chart directory; defaults to the first input directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn configure_workers() -> anyhow::Result<()> {
    if let Ok(raw) = std::env::var(WORKERS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got '{raw}'"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    Ok(())
}

fn execute(args: Args) -> anyhow::Result<i32> {
    configure_workers()?;
    match args.command {
        Command::Run {
            config,
            scenario,
            seed,
            runs,
            horizon,
            out,
            predictors,
        } => {
            let req = RunRequest {
                config,
                scenario,
                overrides: Overrides {
                    seed,
                    runs,
                    horizon,
                    predictors,
                },
                out,
            };
            let outcome = cli::run_command(&req)?;
            print!("{}", outcome.summary);
            println!("wrote {}", outcome.out_dir.display());
            Ok(outcome.exit_code())
        }
        Command::Report { inputs, svg, out } => {
            let svg_dir = if svg { out.or_else(|| inputs.first().cloned()) } else { None };
            let outcome = cli::report_command(&inputs, svg_dir.as_deref())?;
            print!("{}", outcome.text);
            for chart in &outcome.charts {
                println!("chart {}", chart.display());
            }
            Ok(EXIT_PASS)
        }
        Command::Selftest => {
            let checks = cli::selftest::run_all();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if checks.iter().all(|c| c.passed) {
                EXIT_PASS
            } else {
                EXIT_BOUND_VIOLATION
            })
        }
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR as u8 } else { EXIT_PASS as u8 });
        }
    };
    match execute(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
