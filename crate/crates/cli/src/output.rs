//! Trace files and their sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use qmaxent::solvers::SolverTrace;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const TRACE_HEADER: [&str; 4] = ["iter", "gap", "residual", "wall_ns"];
pub const CHECKPOINT_EVERY: usize = 10;

#[derive(Serialize)]
struct TraceRow {
    iter: usize,
    gap: f64,
    residual: f64,
    wall_ns: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iter: usize,
    pub lambda: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSidecar {
    pub instance: String,
    pub method: String,
    pub checkpoints: Vec<Checkpoint>,
}

/// Paths of one trace and its sidecar.
pub fn trace_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.lambda.json")))
}

pub fn write_trace(dir: &Path, stem: &str, instance: &str, trace: &SolverTrace, record_timing: bool) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let (csv_path, json_path) = trace_paths(dir, stem);
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))?;
    for r in &trace.records {
        let row = TraceRow { iter: r.iter, gap: r.gap, residual: r.residual, wall_ns: if record_timing { r.wall_ns } else { 0 } };
        w.serialize(row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush()?;

    let last = trace.records.len() - 1;
    let checkpoints = trace
        .records
        .iter()
        .filter(|r| r.iter % CHECKPOINT_EVERY == 0 || r.iter == last)
        .map(|r| Checkpoint { iter: r.iter, lambda: r.lambda.clone() })
        .collect();
    let sidecar = LambdaSidecar { instance: instance.into(), method: trace.config.label(), checkpoints };
    fs::write(&json_path, serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"))?;
    Ok(())
}

/// `(iter, gap, residual, wall_ns)` rows of a trace file.
pub fn read_trace(path: &Path) -> Result<Vec<(usize, f64, f64, u64)>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = r.headers().map_err(|e| CliError::Io(e.to_string()))?.iter().map(String::from).collect();
    if header != TRACE_HEADER {
        return Err(CliError::Io(format!("{}: unexpected header {header:?}", path.display())));
    }
    r.deserialize().map(|row| row.map_err(|e| CliError::Io(e.to_string()))).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value).expect("value serializes"))?;
    Ok(())
}
