//! Parameter sweeps: one run per value of a configuration key.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};
use toml::Value;

use crate::error::{Error, Result};

use super::config::{from_table, set_path, Mode, RunSpec};
use super::runner::{fmt, run_bound, run_propa, run_relax, RunContext, RunSummary};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: Value,
    pub result: std::result::Result<f64, String>,
}

/// Configuration of one point: the sweep value substituted
/// and the sweep section removed.
pub fn point_spec(spec: &RunSpec, value: &Value) -> Result<RunSpec> {
    let sweep = spec.sweep.as_ref().ok_or_else(|| Error::config("sweep", "missing required section"))?;
    let mut table = spec.source.clone();
    table.remove("sweep");
    set_path(&mut table, &sweep.key, value.clone())?;
    let mut point = from_table(table, &spec.base_dir, &spec.stem)?;
    point.stem = spec.stem.clone();
    Ok(point)
}

pub fn run_mode(mode: Mode, spec: &RunSpec, ctx: &RunContext) -> Result<RunSummary> {
    match mode {
        Mode::Bound => run_bound(spec, ctx),
        Mode::Propa => run_propa(spec, ctx),
        Mode::Relax => run_relax(spec, ctx),
    }
}

fn select(summary: &RunSummary, key: &str) -> std::result::Result<f64, String> {
    summary.scalars.get(key).copied().ok_or_else(|| {
        let names: Vec<&str> = summary.scalars.keys().map(String::as_str).collect();
        format!("no output `{key}`; this run reports: {}", names.join(", "))
    })
}

/// Runs every point on up to `threads` threads, each in `point_<n>` below
/// the output directory, and writes `sweep.csv`. Failed points are recorded
/// and do not stop the sweep.
pub fn run_sweep(spec: &RunSpec, ctx: &RunContext, threads: usize) -> Result<Vec<SweepPoint>> {
    let sweep = spec.sweep.as_ref().ok_or_else(|| Error::config("sweep", "missing required section"))?;
    if sweep.values.is_empty() {
        return Err(Error::config("sweep.values", "needs at least one value"));
    }
    // a bad key is a configuration error for the whole sweep
    point_spec(spec, &sweep.values[0]).map(drop).or_else(|e| match e {
        Error::Config { ref field, .. } if field == "sweep.key" => Err(e),
        Error::Config { ref field, ref message }
            if message.starts_with("unknown key") && field.rsplit('.').next() == sweep.key.rsplit('.').next() =>
        {
            Err(Error::config("sweep.key", format!("`{}`: {message}", sweep.key)))
        }
        _ => Ok(()),
    })?;
    let n = sweep.values.len();
    let results: Mutex<Vec<Option<SweepPoint>>> = Mutex::new(vec![None; n]);
    let next = AtomicUsize::new(0);
    let workers = threads.clamp(1, n);
    info!("sweep over `{}`: {n} point(s) on {workers} thread(s)", sweep.key);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let value = sweep.values[i].clone();
                let dir = ctx.out_dir.join(format!("point_{}", i + 1));
                let result = std::fs::create_dir_all(&dir)
                    .map_err(|e| Error::io(&dir, e))
                    .and_then(|_| point_spec(spec, &value))
                    .and_then(|p| run_mode(sweep.run, &p, &RunContext { out_dir: dir, frames: ctx.frames }))
                    .map_err(|e| e.to_string())
                    .and_then(|summary| select(&summary, &sweep.output));
                match &result {
                    Ok(v) => info!("sweep point {} ({value}): {} = {v:.12e}", i + 1, sweep.output),
                    Err(e) => warn!("sweep point {} ({value}) failed: {e}", i + 1),
                }
                results.lock().expect("sweep results")[i] = Some(SweepPoint { value, result });
            });
        }
    });
    let points: Vec<SweepPoint> =
        results.into_inner().expect("sweep results").into_iter().map(|p| p.expect("every point ran")).collect();
    write_summary(&ctx.out_dir.join("sweep.csv"), &sweep.key, &sweep.output, &points)?;
    Ok(points)
}

fn write_summary(path: &Path, key: &str, output: &str, points: &[SweepPoint]) -> Result<()> {
    let io = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["point", key, output, "status"]).map_err(io)?;
    for (i, p) in points.iter().enumerate() {
        let value = match &p.value {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        let (v, status) = match &p.result {
            Ok(v) => (fmt(*v), "ok".to_string()),
            Err(e) => (String::new(), e.clone()),
        };
        w.write_record([(i + 1).to_string(), value, v, status]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
