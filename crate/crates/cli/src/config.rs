//! Experiment configuration: a single JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use qmaxent::model::FamilyKind;
use qmaxent::solvers::{Method, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One solver column. Unset fields take the solver defaults, except `tol`,
/// which defaults to the experiment's precision target so that runs stop as
/// soon as the step count is known.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub method: Method,
    #[serde(default)]
    pub use_bb: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rcond: Option<f64>,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        Self { method, use_bb: false, eta: None, history: None, max_iters: None, tol: None, rcond: None }
    }

    pub fn with_bb(mut self) -> Self {
        self.use_bb = true;
        self
    }

    pub fn solver_config(&self, precision: f64) -> SolverConfig {
        let mut cfg = SolverConfig::new(self.method).with_bb(self.use_bb).with_tol(self.tol.unwrap_or(precision));
        cfg.eta = self.eta;
        if let Some(h) = self.history {
            cfg.history = h;
        }
        if let Some(n) = self.max_iters {
            cfg.max_iters = n;
        }
        if let Some(r) = self.rcond {
            cfg.rcond = r;
        }
        cfg
    }
}

fn default_beta() -> f64 {
    1.0
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_precision() -> f64 {
    1e-7
}

/// Every combination of `families`, `n_qubits` and `seeds` is one instance;
/// each instance is solved with every entry of `methods`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub families: Vec<FamilyKind>,
    pub n_qubits: Vec<usize>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub seeds: Vec<u64>,
    /// Append `I - sum_j F_j` to every family.
    #[serde(default)]
    pub complete: bool,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Gap at which steps are counted.
    #[serde(default = "default_precision")]
    pub precision: f64,
    /// Write elapsed nanoseconds into traces. Off by default so that reruns
    /// produce byte-identical files.
    #[serde(default)]
    pub record_timing: bool,
}

impl ExperimentConfig {
    /// The nine benchmark cells with QIS, GD and both accelerated methods
    /// using Barzilai-Borwein scaling.
    pub fn bench_default() -> Self {
        Self {
            families: vec![FamilyKind::Ising, FamilyKind::Transversal1D, FamilyKind::Local1D],
            n_qubits: vec![6, 7, 8],
            beta: 1.0,
            seeds: vec![0],
            complete: false,
            methods: vec![
                MethodSpec::new(Method::Qis),
                MethodSpec::new(Method::Gd),
                MethodSpec::new(Method::AmQis).with_bb(),
                MethodSpec::new(Method::LbfgsGd).with_bb(),
            ],
            output_dir: default_output_dir(),
            precision: default_precision(),
            record_timing: false,
        }
    }

    pub fn solve_default() -> Self {
        Self {
            families: vec![FamilyKind::Ising],
            n_qubits: vec![6],
            methods: vec![MethodSpec::new(Method::Qis), MethodSpec::new(Method::Gd)],
            ..Self::bench_default()
        }
    }

    pub fn diagnose_default() -> Self {
        Self { families: vec![FamilyKind::Local1D], n_qubits: vec![3], ..Self::solve_default() }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: &str| Err(CliError::Config(msg.into()));
        if self.families.is_empty() {
            return fail("families must not be empty");
        }
        if self.families.contains(&FamilyKind::Custom) {
            return fail("the Custom family cannot be built from a config");
        }
        if self.n_qubits.is_empty() {
            return fail("n_qubits must not be empty");
        }
        if self.seeds.is_empty() {
            return fail("seeds must not be empty");
        }
        if self.methods.is_empty() {
            return fail("at least one method is required");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return fail("beta must be positive");
        }
        if !(self.precision > 0.0) {
            return fail("precision must be positive");
        }
        for m in &self.methods {
            m.solver_config(self.precision).validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn solver_configs(&self) -> Vec<SolverConfig> {
        self.methods.iter().map(|m| m.solver_config(self.precision)).collect()
    }

    /// `(family, n, seed)` in the order rows are reported.
    pub fn cells(&self) -> Vec<(FamilyKind, usize, u64)> {
        let mut out = Vec::new();
        for &kind in &self.families {
            for &n in &self.n_qubits {
                for &seed in &self.seeds {
                    out.push((kind, n, seed));
                }
            }
        }
        out
    }
}
