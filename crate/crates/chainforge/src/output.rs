//! Result files: per-experiment CSV summary, JSON dump, optimizer trace and
//! the resolved configuration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chainforge_core::Lambda;

use crate::config::Config;
use crate::experiments::{share_columns, shares_of, ExperimentError, SweepResult};

pub const SUMMARY_COLUMNS: [&str; 17] = [
    "experiment",
    "parameter",
    "seed",
    "scenarios",
    "mean",
    "std",
    "min",
    "q1",
    "median",
    "q3",
    "max",
    "n_outliers",
    "lambda",
    "lambda_normalized",
    "baseline_mean",
    "expected_profit",
    "error",
];

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn lambda(l: Option<Lambda>) -> String {
    match l {
        Some(Lambda::Value(v)) => num(v),
        Some(Lambda::Undefined) => "undefined".to_string(),
        None => String::new(),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> ExperimentError + '_ {
    move |e| ExperimentError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

/// One row per (value, seed) point, followed by order-share columns.
pub fn summary_csv<W: Write>(result: &SweepResult, out: W) -> csv::Result<()> {
    let shares = share_columns(result);
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = SUMMARY_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(shares.iter().map(|g| format!("order_share_{g}")))
        .collect();
    w.write_record(&header)?;
    for p in &result.points {
        let r = p.report.as_ref();
        let mut row = vec![
            result.name.clone(),
            num(p.parameter),
            p.seed.to_string(),
            p.scenarios.to_string(),
            opt(r.map(|r| r.mean)),
            opt(r.map(|r| r.std)),
            opt(r.map(|r| r.min)),
            opt(r.map(|r| r.q1)),
            opt(r.map(|r| r.median)),
            opt(r.map(|r| r.q3)),
            opt(r.map(|r| r.max)),
            r.map(|r| r.outliers.len().to_string()).unwrap_or_default(),
            lambda(p.lambda),
            lambda(p.lambda_normalized),
            opt(p.baseline_mean),
            opt(p.error.is_none().then_some(p.expected_profit)),
            p.error.clone().unwrap_or_default(),
        ];
        let by_good = shares_of(p);
        row.extend(shares.iter().map(|g| opt(by_good.get(g.as_str()).copied())));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Incumbent objective after each improving evaluation, per point.
pub fn trace_csv<W: Write>(result: &SweepResult, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["experiment", "parameter", "seed", "evaluation", "incumbent"])?;
    for p in &result.points {
        for t in &p.trace {
            w.write_record([
                result.name.clone(),
                num(p.parameter),
                p.seed.to_string(),
                t.evaluation.to_string(),
                num(t.incumbent),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write `<name>.csv`, `<name>.json`, `<name>_trace.csv` and any LP dumps
/// under `dir`. Returns the written paths.
pub fn write_result(dir: &Path, result: &SweepResult) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let path = dir.join(format!("{}.csv", result.name));
    let f = fs::File::create(&path).map_err(io_err(&path))?;
    summary_csv(result, f).map_err(csv_err(&path))?;
    written.push(path);

    let path = dir.join(format!("{}_trace.csv", result.name));
    let f = fs::File::create(&path).map_err(io_err(&path))?;
    trace_csv(result, f).map_err(csv_err(&path))?;
    written.push(path);

    let path = dir.join(format!("{}.json", result.name));
    let json = serde_json::to_string_pretty(result).map_err(|e| ExperimentError::Io {
        path: path.clone(),
        source: std::io::Error::other(e),
    })?;
    fs::write(&path, json).map_err(io_err(&path))?;
    written.push(path);

    if !result.lp_dumps.is_empty() {
        let lp_dir = dir.join("lp");
        fs::create_dir_all(&lp_dir).map_err(io_err(&lp_dir))?;
        for (name, text) in &result.lp_dumps {
            let path = lp_dir.join(name);
            fs::write(&path, text).map_err(io_err(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// The configuration actually used, defaults filled in.
pub fn write_resolved_config(dir: &Path, cfg: &Config) -> Result<PathBuf, ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("config.resolved.json");
    let json = serde_json::to_string_pretty(cfg).map_err(|e| ExperimentError::Io {
        path: path.clone(),
        source: std::io::Error::other(e),
    })?;
    fs::write(&path, json).map_err(io_err(&path))?;
    Ok(path)
}
