//! `solve`, `bench` and `diagnose`.
//!
//! Cells run in parallel on a pool of `jobs` threads; each writes only its
//! own files, and summaries are assembled afterwards in configuration order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use qmaxent::analysis::{self, DiagnoseOptions, DiagnosticsReport};
use qmaxent::model::{build_family, make_instance, FamilyKind, ProblemInstance};
use qmaxent::solvers::{self, Method, SolverConfig, Status};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::output::{trace_paths, write_json, write_trace};
use crate::CliError;

/// Accelerated methods must reach the precision within this many steps.
pub const ACCELERATED_STEP_CAP: usize = 40;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses one per core.
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub instance: String,
    pub family: FamilyKind,
    pub n_qubits: usize,
    pub seed: u64,
    pub method: String,
    pub status: Status,
    pub iterations: usize,
    /// First iteration with gap at most the precision, `None` if never.
    pub steps_to_precision: Option<usize>,
    pub final_gap: f64,
    pub final_residual: f64,
    /// Elapsed time of the run, only when timing is recorded.
    pub wall_seconds: Option<f64>,
    /// Recovered physical parameters.
    pub mu_hat: Vec<f64>,
    /// `max_j |mu_hat_j - mu*_j|` when the ground truth is known.
    pub mu_error: Option<f64>,
    pub failure: Option<String>,
    /// Trace file relative to the output directory.
    pub trace: String,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub precision: f64,
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flagged)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<28} {:<12} {:>6} {:>8} {:>11} {:>11}  status", "instance", "method", "steps", "iters", "final gap", "mu error");
        for r in &self.rows {
            let steps = r.steps_to_precision.map_or("-".into(), |s| s.to_string());
            let mu = r.mu_error.map_or("-".into(), |e| format!("{e:.3e}"));
            let flag = if r.flagged { " FLAGGED" } else { "" };
            let _ = writeln!(
                s,
                "{:<28} {:<12} {:>6} {:>8} {:>11.3e} {:>11}  {:?}{flag}",
                r.instance, r.method, steps, r.iterations, r.final_gap, mu, r.status
            );
        }
        s
    }
}

struct Cell {
    family: FamilyKind,
    n_qubits: usize,
    seed: u64,
    label: String,
    instance: ProblemInstance,
}

fn pool(opts: &RunOptions) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = opts.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        b = b.num_threads(j);
    }
    b.build().map_err(|e| CliError::Config(e.to_string()))
}

fn build_cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>, CliError> {
    cfg.cells()
        .into_par_iter()
        .map(|(family, n_qubits, seed)| {
            let fam = build_family(family, n_qubits, seed).map_err(|e| CliError::Config(format!("{family} n={n_qubits}: {e}")))?;
            let instance = make_instance(&fam, cfg.beta, cfg.complete).map_err(|e| CliError::Config(format!("{family} n={n_qubits}: {e}")))?;
            let label = format!("{}{}-s{seed}", instance.label, if cfg.complete { "-c" } else { "" });
            Ok(Cell { family, n_qubits, seed, label, instance })
        })
        .collect()
}

fn solve_cell(cfg: &ExperimentConfig, out: &Path, cell: &Cell, solver: &SolverConfig) -> Result<SummaryRow, CliError> {
    let trace = solvers::run(&cell.instance, solver).map_err(|e| CliError::Config(e.to_string()))?;
    let method = solver.label();
    let stem = format!("{}-{method}", cell.label);
    let dir = out.join("traces");
    write_trace(&dir, &stem, &cell.label, &trace, cfg.record_timing)?;
    let steps = trace.steps_to(cfg.precision);
    let mu_hat = cell.instance.recover_mu(trace.final_lambda());
    let mu_error = cell
        .instance
        .ground_truth
        .as_ref()
        .map(|gt| mu_hat.iter().zip(&gt.mu).fold(0.0f64, |e, (a, b)| e.max((a - b).abs())));
    if let Some(f) = &trace.failure {
        warn!("{} {method}: {f}", cell.label);
    }
    info!("{} {method}: {:?} after {} iterations, steps {:?}", cell.label, trace.status, trace.iterations(), steps);
    let flagged = steps.is_none() || trace.status == Status::NumericalFailure;
    let (csv_path, _) = trace_paths(Path::new("traces"), &stem);
    Ok(SummaryRow {
        instance: cell.label.clone(),
        family: cell.family,
        n_qubits: cell.n_qubits,
        seed: cell.seed,
        method,
        status: trace.status,
        iterations: trace.iterations(),
        steps_to_precision: steps,
        final_gap: trace.final_gap(),
        final_residual: trace.last().residual,
        wall_seconds: cfg.record_timing.then(|| trace.last().wall_ns as f64 * 1e-9),
        mu_hat,
        mu_error,
        failure: trace.failure.clone(),
        trace: csv_path.to_string_lossy().into_owned(),
        flagged,
    })
}

fn run_all(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<Summary, CliError> {
    cfg.validate()?;
    let solvers_cfg = cfg.solver_configs();
    let pool = pool(opts)?;
    let rows = pool.install(|| -> Result<Vec<SummaryRow>, CliError> {
        let cells = build_cells(cfg)?;
        debug!("{} instances x {} methods", cells.len(), solvers_cfg.len());
        let jobs: Vec<(&Cell, &SolverConfig)> = cells.iter().flat_map(|c| solvers_cfg.iter().map(move |s| (c, s))).collect();
        jobs.into_par_iter().map(|(cell, solver)| solve_cell(cfg, out, cell, solver)).collect()
    })?;
    let summary = Summary { precision: cfg.precision, rows };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Solves every instance with every method and writes traces plus
/// `summary.json`.
pub fn solve(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Summary, CliError> {
    run_all(cfg, &cfg.output_dir, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance: String,
    /// Steps to precision, one entry per method column.
    pub steps: Vec<Option<usize>>,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub precision: f64,
    pub methods: Vec<String>,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn flagged(&self) -> bool {
        self.rows.iter().any(|r| !r.flags.is_empty())
    }

    pub fn steps(&self, instance: &str, method: &str) -> Option<usize> {
        let col = self.methods.iter().position(|m| m == method)?;
        self.rows.iter().find(|r| r.instance == instance)?.steps[col]
    }

    pub fn render_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Steps to reach gap <= {:e}\n", self.precision);
        let _ = writeln!(s, "| instance | {} | flags |", self.methods.join(" | "));
        let _ = writeln!(s, "|---|{}---|", "---:|".repeat(self.methods.len()));
        for r in &self.rows {
            let cells: Vec<String> = r.steps.iter().map(|s| s.map_or("not reached".into(), |v| v.to_string())).collect();
            let _ = writeln!(s, "| {} | {} | {} |", r.instance, cells.join(" | "), r.flags.join("; "));
        }
        s
    }
}

fn tabulate(cfg: &ExperimentConfig, summary: &Summary) -> BenchTable {
    let methods: Vec<String> = cfg.solver_configs().iter().map(|c| c.label()).collect();
    let kinds: Vec<Method> = cfg.methods.iter().map(|m| m.method).collect();
    let mut rows: Vec<BenchRow> = Vec::new();
    for chunk in summary.rows.chunks(methods.len()) {
        let steps: Vec<Option<usize>> = chunk.iter().map(|r| r.steps_to_precision).collect();
        let mut flags = Vec::new();
        for (r, s) in chunk.iter().zip(&steps) {
            if s.is_none() {
                flags.push(format!("{} did not reach precision", r.method));
            }
        }
        let first = |m: Method| kinds.iter().position(|&k| k == m).map(|i| steps[i]);
        if let (Some(Some(q)), Some(Some(g))) = (first(Method::Qis), first(Method::Gd)) {
            if q >= g {
                flags.push(format!("QIS ({q}) not faster than GD ({g})"));
            }
        }
        for (i, kind) in kinds.iter().enumerate() {
            if let (true, Some(s)) = (kind.is_accelerated(), steps[i]) {
                if s > ACCELERATED_STEP_CAP {
                    flags.push(format!("{} took {s} > {ACCELERATED_STEP_CAP} steps", methods[i]));
                }
            }
        }
        rows.push(BenchRow { instance: chunk[0].instance.clone(), steps, flags });
    }
    BenchTable { precision: cfg.precision, methods, rows }
}

/// [`solve`] followed by the step-count table and its ordering checks.
pub fn bench(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(Summary, BenchTable), CliError> {
    let summary = run_all(cfg, &cfg.output_dir, opts)?;
    let table = tabulate(cfg, &summary);
    std::fs::write(cfg.output_dir.join("table.md"), table.render_markdown())?;
    write_json(&cfg.output_dir.join("table.json"), &table)?;
    Ok((summary, table))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseRow {
    pub instance: String,
    pub report: Option<DiagnosticsReport>,
    pub error: Option<String>,
    pub file: Option<PathBuf>,
}

impl DiagnoseRow {
    pub fn flagged(&self) -> bool {
        self.report.as_ref().map_or(true, |r| !r.passes())
    }
}

/// Runs the analysis suite at the optimum of every instance; one report
/// file per instance. Methods in the config are not used.
pub fn diagnose(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<DiagnoseRow>, CliError> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let pool = pool(opts)?;
    pool.install(|| {
        let cells = build_cells(cfg)?;
        cells
            .par_iter()
            .map(|cell| {
                let (report, error) = match analysis::diagnose(&cell.instance, &DiagnoseOptions::default()) {
                    Ok(r) => (Some(r), None),
                    Err(e) => {
                        warn!("{}: {e}", cell.label);
                        (None, Some(e.to_string()))
                    }
                };
                let file = out.join("diagnostics").join(format!("{}.json", cell.label));
                let row = DiagnoseRow { instance: cell.label.clone(), report, error, file: Some(file.clone()) };
                write_json(&file, &row)?;
                info!("{}: {}", cell.label, if row.flagged() { "flagged" } else { "all checks pass" });
                Ok(row)
            })
            .collect()
    })
}

pub fn render_diagnostics(rows: &[DiagnoseRow]) -> String {
    let mut s = String::new();
    for row in rows {
        let _ = writeln!(s, "{}", row.instance);
        if let Some(e) = &row.error {
            let _ = writeln!(s, "  FAIL  error: {e}");
        }
        if let Some(r) = &row.report {
            let _ = writeln!(
                s,
                "  spectral radius QIS {:.6} (fd {:.6}), GD {:.6} (fd {:.6}); empirical QIS {}, GD {}",
                r.spectral_radius_qis,
                r.fd_spectral_radius_qis,
                r.spectral_radius_gd,
                r.fd_spectral_radius_gd,
                r.empirical_rate_qis.map_or("-".into(), |v| format!("{v:.6}")),
                r.empirical_rate_gd.map_or("-".into(), |v| format!("{v:.6}")),
            );
            for c in &r.checks {
                let _ = writeln!(s, "  {}  {:<40} {:>12.4e}  {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.value, c.condition);
            }
        }
    }
    s
}
