//! Reading ledgers back, trajectory summaries and SVG charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::output::{class_ledger_header, ledger_header, BOUNDS_FILE, BOUNDS_HEADER, CLASS_LEDGER_FILE, LEDGER_FILE};
use super::CliError;

/// One ledger file: per-column mean cumulative trajectories over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerSummary {
    pub source: PathBuf,
    pub runs: usize,
    pub horizon: usize,
    /// Column name to the mean over runs of the cumulative sum at `t = 1..=T`.
    pub trajectories: BTreeMap<String, Vec<f64>>,
    /// Column name to bound, from the neighbouring bounds file when present.
    pub bounds: BTreeMap<String, f64>,
}

fn schema_err(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Schema {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn parse_f64(path: &Path, line: u64, s: &str) -> Result<f64, CliError> {
    s.parse()
        .map_err(|_| schema_err(path, format!("line {line}: '{s}' is not a number")))
}

/// Reads the ledger in `dir` (regression or classification schema).
pub fn read_ledger_dir(dir: &Path) -> Result<LedgerSummary, CliError> {
    let (path, header) = if dir.join(LEDGER_FILE).exists() {
        (dir.join(LEDGER_FILE), ledger_header())
    } else if dir.join(CLASS_LEDGER_FILE).exists() {
        (dir.join(CLASS_LEDGER_FILE), class_ledger_header())
    } else {
        return Err(schema_err(dir, format!("no {LEDGER_FILE} or {CLASS_LEDGER_FILE}")));
    };
    let mut reader = csv::Reader::from_path(&path).map_err(|e| CliError::Csv {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let found: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Csv {
            path: path.clone(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if found != header {
        return Err(schema_err(
            &path,
            format!("header '{}' does not match '{}'", found.join(","), header.join(",")),
        ));
    }
    let columns = &header[2..];
    // run -> per-column cumulative sums in step order
    let mut per_run: BTreeMap<u64, Vec<Vec<Option<f64>>>> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Csv {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let run: u64 = rec[0]
            .parse()
            .map_err(|_| schema_err(&path, format!("line {line}: bad run_id '{}'", &rec[0])))?;
        let t: usize = rec[1]
            .parse()
            .map_err(|_| schema_err(&path, format!("line {line}: bad t '{}'", &rec[1])))?;
        let steps = per_run.entry(run).or_default();
        if t != steps.len() + 1 {
            return Err(schema_err(&path, format!("line {line}: run {run} expected t = {}", steps.len() + 1)));
        }
        let prev = steps.last().cloned();
        let mut row = Vec::with_capacity(columns.len());
        for (i, cell) in rec.iter().skip(2).enumerate() {
            let v = if cell.is_empty() { None } else { Some(parse_f64(&path, line, cell)?) };
            let acc = prev.as_ref().map_or(Some(0.0), |p| p[i]);
            row.push(match (acc, v) {
                (Some(a), Some(v)) => Some(a + v),
                _ => None,
            });
        }
        steps.push(row);
    }
    if per_run.is_empty() {
        return Err(schema_err(&path, "ledger has no rows"));
    }
    let horizon = per_run.values().map(Vec::len).min().unwrap_or(0);
    let runs = per_run.len();
    let mut trajectories = BTreeMap::new();
    for (i, name) in columns.iter().enumerate() {
        let mut mean = vec![0.0; horizon];
        let mut tracked = true;
        for steps in per_run.values() {
            for (t, slot) in mean.iter_mut().enumerate() {
                match steps[t][i] {
                    Some(v) => *slot += v,
                    None => tracked = false,
                }
            }
        }
        if tracked {
            trajectories.insert(name.to_string(), mean.into_iter().map(|v| v / runs as f64).collect());
        }
    }
    Ok(LedgerSummary {
        source: path,
        runs,
        horizon,
        trajectories,
        bounds: read_bounds(&dir.join(BOUNDS_FILE))?,
    })
}

fn read_bounds(path: &Path) -> Result<BTreeMap<String, f64>, CliError> {
    let mut out = BTreeMap::new();
    if !path.exists() {
        return Ok(out);
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header != BOUNDS_HEADER {
        return Err(schema_err(path, format!("unexpected header '{}'", header.join(","))));
    }
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.insert(rec[0].to_string(), parse_f64(path, line, &rec[3])?);
    }
    Ok(out)
}

pub fn report_text(ledgers: &[LedgerSummary]) -> String {
    let mut s = String::new();
    for l in ledgers {
        let _ = writeln!(s, "{}  runs {}  horizon {}", l.source.display(), l.runs, l.horizon);
        for (name, traj) in &l.trajectories {
            let last = traj.last().copied().unwrap_or(0.0);
            match l.bounds.get(name) {
                Some(b) => {
                    let _ = writeln!(s, "  {name:<16} final mean {last:>12.6}  bound {b:>12.6}");
                }
                None => {
                    let _ = writeln!(s, "  {name:<16} final mean {last:>12.6}");
                }
            }
        }
    }
    s
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// One line chart per tracked column, overlaying every ledger; the bound of
/// the first ledger that has one is drawn as a dashed horizontal line.
pub fn render_charts(ledgers: &[LedgerSummary]) -> BTreeMap<String, String> {
    let mut names: Vec<&String> = ledgers.iter().flat_map(|l| l.trajectories.keys()).collect();
    names.sort();
    names.dedup();
    names
        .into_iter()
        .map(|name| (name.clone(), render_chart(name, ledgers)))
        .collect()
}

fn render_chart(name: &str, ledgers: &[LedgerSummary]) -> String {
    let series: Vec<(usize, &Vec<f64>)> = ledgers
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.trajectories.get(name).map(|t| (i, t)))
        .collect();
    let bound = ledgers.iter().find_map(|l| l.bounds.get(name).copied());
    let t_max = series.iter().map(|(_, s)| s.len()).max().unwrap_or(1).max(1) as f64;
    let y_data = series.iter().flat_map(|(_, s)| s.iter().copied()).fold(0.0, f64::max);
    let y_max = (y_data.max(bound.unwrap_or(0.0)) * 1.05).max(1e-12);
    let px = |t: f64| MARGIN + (WIDTH - 2.0 * MARGIN) * t / t_max;
    let py = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * v / y_max;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">cumulative {name}</text>"#,
        WIDTH / 2.0
    );
    let (x0, y0, x1, y1) = (px(0.0), py(0.0), px(t_max), py(y_max));
    let _ = writeln!(
        svg,
        r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
            x0 - 6.0,
            py(v) + 4.0
        );
        let t = t_max * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t:.0}</text>"#,
            px(t),
            y0 + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0
    );
    if let Some(b) = bound {
        let _ = writeln!(
            svg,
            r#"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="black" stroke-dasharray="6,4"/>"#,
            y = py(b)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">bound {b:.4}</text>"#,
            x1,
            py(b) - 6.0
        );
    }
    for (slot, (i, s)) in series.iter().enumerate() {
        let color = COLORS[slot % COLORS.len()];
        let mut pts = String::new();
        for (t, v) in s.iter().enumerate() {
            let _ = write!(pts, "{:.2},{:.2} ", px((t + 1) as f64), py(*v));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.trim_end()
        );
        let ly = MARGIN + 16.0 * slot as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}" fill="{color}">{}</text>"#,
            x0 + 10.0,
            xml_escape(&ledgers[*i].source.display().to_string())
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
