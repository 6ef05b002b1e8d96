//! Versioned CSV files and the plain-text summary written by `run`.

use std::fmt::Write as _;
use std::path::Path;

use super::CliError;
use crate::classify::{ClassQuantity, ClassificationLedger};
use crate::metrics::{LossLedger, Quantity};
use crate::simulate::BoundReport;

pub const LEDGER_FILE: &str = "ledger.v1.csv";
pub const CLASS_LEDGER_FILE: &str = "classification_ledger.v1.csv";
pub const BOUNDS_FILE: &str = "bounds.v1.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

pub const BOUNDS_HEADER: [&str; 6] = ["quantity", "mean", "std_err", "bound", "slack", "pass"];

pub fn ledger_header() -> Vec<&'static str> {
    ["run_id", "t"].into_iter().chain(Quantity::ALL.map(Quantity::column)).collect()
}

pub fn class_ledger_header() -> Vec<&'static str> {
    ["run_id", "t"].into_iter().chain(ClassQuantity::ALL.map(ClassQuantity::column)).collect()
}

/// Seventeen significant digits; round-trips through `f64::from_str`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_ledgers(path: &Path, ledgers: &[LossLedger]) -> Result<(), CliError> {
    let rows = ledgers.iter().flat_map(|l| {
        l.records.iter().map(move |r| {
            let mut row = vec![l.run_id.to_string(), r.t.to_string()];
            row.extend(r.values.iter().map(|v| fmt_opt(*v)));
            row
        })
    });
    write_rows(path, &ledger_header(), rows)
}

pub fn write_class_ledgers(path: &Path, ledgers: &[ClassificationLedger]) -> Result<(), CliError> {
    let rows = ledgers.iter().flat_map(|l| {
        l.records.iter().map(move |r| {
            let mut row = vec![l.run_id.to_string(), r.t.to_string()];
            row.extend(r.values.iter().map(|v| fmt_opt(*v)));
            row
        })
    });
    write_rows(path, &class_ledger_header(), rows)
}

pub fn write_bounds(path: &Path, report: &BoundReport) -> Result<(), CliError> {
    let rows = report.quantities.iter().map(|q| {
        vec![
            q.name.clone(),
            fmt_f64(q.mean),
            fmt_f64(q.std_err),
            fmt_f64(q.bound),
            fmt_f64(q.slack),
            q.pass.to_string(),
        ]
    });
    write_rows(path, &BOUNDS_HEADER, rows)
}

pub fn summary_text(report: &BoundReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario {}", report.scenario);
    let _ = writeln!(
        s,
        "runs {}  horizon {}  w_mu {}",
        report.runs, report.horizon, report.w_mu
    );
    let _ = writeln!(
        s,
        "{:<16} {:>14} {:>12} {:>12} {:>12} {:>8}  verdict",
        "quantity", "mean", "std_err", "bound", "slack", "slack%"
    );
    for q in &report.quantities {
        let _ = writeln!(
            s,
            "{:<16} {:>14.6} {:>12.6} {:>12.6} {:>12.6} {:>7.2}%  {}",
            q.name,
            q.mean,
            q.std_err,
            q.bound,
            q.slack,
            100.0 * q.relative_slack(),
            if q.pass { "pass" } else { "FAIL" }
        );
    }
    if let Some(t) = &report.tail {
        let _ = writeln!(
            s,
            "tail: {:.2}% of runs below {} after step {}",
            100.0 * t.fraction_below,
            t.threshold,
            t.after
        );
    }
    let _ = writeln!(s, "triangle violations: {}", report.triangle_violations);
    let _ = writeln!(s, "sandwich violations: {}", report.sandwich_violations);
    let _ = writeln!(s, "overall: {}", if report.all_pass() { "pass" } else { "FAIL" });
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1.4142135623730951e-7, 1e-300, 0.0, -7.25e12] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }

    #[test]
    fn header_is_fixed() {
        assert_eq!(
            ledger_header().join(","),
            "run_id,t,h2_mu_xi,h2_mu_rhobar,h2_rhobar_rho,h2_rho_static,h2_mu_static,kl_mu_rhobar"
        );
    }
}
