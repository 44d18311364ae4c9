//! Iterative solvers for the dual problem `min ln tr exp(lambda . F) - lambda . alpha`.
//!
//! * QIS: `lambda_j += ln alpha_j - ln <F_j, xi>`
//! * GD: `lambda_j += eta (alpha_j - <F_j, xi>)`
//! * AM-QIS: Anderson mixing on the QIS fixed-point map
//! * LBFGS-GD: L-BFGS with unit steps on the dual objective
//!
//! Every run starts at `lambda = 0` and records one [`TraceRecord`] per
//! evaluated point.

pub mod anderson;
pub mod lbfgs;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use anderson::{anderson_update, bb_mixing, AndersonHistory};
pub use lbfgs::{lbfgs_step, LbfgsHistory};

use crate::dense::{norm_inf, sub};
use crate::error::{Error, Result};
use crate::gibbs::{dual_gradient, dual_objective, DualEvaluation, GibbsOracle, MomentData};
use crate::model::ProblemInstance;

/// An accelerated method restarts from a plain step when the gap grows by
/// more than this factor in one iteration.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "QIS")]
    Qis,
    #[serde(rename = "GD")]
    Gd,
    #[serde(rename = "AM-QIS")]
    AmQis,
    #[serde(rename = "LBFGS-GD")]
    LbfgsGd,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Qis, Method::Gd, Method::AmQis, Method::LbfgsGd];

    pub fn name(self) -> &'static str {
        match self {
            Method::Qis => "QIS",
            Method::Gd => "GD",
            Method::AmQis => "AM-QIS",
            Method::LbfgsGd => "LBFGS-GD",
        }
    }

    pub fn is_accelerated(self) -> bool {
        matches!(self, Method::AmQis | Method::LbfgsGd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_history() -> usize {
    10
}
fn default_max_iters() -> usize {
    20_000
}
fn default_tol() -> f64 {
    1e-12
}
fn default_rcond() -> f64 {
    1e-7
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    /// Learning rate for GD; `None` means the number of observables.
    ///
    /// For L-BFGS without BB this fixes `H_0 = eta I`. When `None`, the first
    /// step is a GD step with `eta = m` and `H_0` is then frozen at the BB
    /// scale `y^T s / y^T y` of the first accepted curvature pair. With BB the
    /// scale is refreshed from the newest pair every iteration.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_history")]
    pub history: usize,
    #[serde(default)]
    pub use_bb: bool,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_rcond")]
    pub rcond: f64,
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        let max_iters = if method.is_accelerated() { 40 } else { default_max_iters() };
        Self {
            method,
            eta: None,
            history: default_history(),
            use_bb: false,
            max_iters,
            tol: default_tol(),
            rcond: default_rcond(),
        }
    }

    pub fn with_bb(mut self, use_bb: bool) -> Self {
        self.use_bb = use_bb;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = Some(eta);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.method.is_accelerated() && self.history == 0 {
            return Err(Error::InvalidArgument("accelerated methods need history >= 1".into()));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) {
                return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
            }
        }
        if !(self.rcond >= 0.0) {
            return Err(Error::InvalidArgument(format!("rcond must be non-negative, got {}", self.rcond)));
        }
        Ok(())
    }

    /// Short label used in file names and tables, e.g. `AM-QIS+BB`.
    pub fn label(&self) -> String {
        if self.use_bb && self.method.is_accelerated() {
            format!("{}+BB", self.method)
        } else {
            self.method.to_string()
        }
    }
}

/// `ln alpha_j - ln <F_j, xi>`.
pub fn qis_step(snap: &impl MomentData, alpha: &[f64]) -> Result<Vec<f64>> {
    snap.moments()
        .iter()
        .zip(alpha)
        .enumerate()
        .map(|(index, (&m, &a))| {
            if !(m > 0.0) {
                return Err(Error::NonPositiveMoment { index, value: m });
            }
            if !(a > 0.0) {
                return Err(Error::InvalidArgument(format!("target moment {index} is {a}, must be positive")));
            }
            Ok(a.ln() - m.ln())
        })
        .collect()
}

/// `-eta * gradient`.
pub fn gd_step(snap: &impl MomentData, alpha: &[f64], eta: f64) -> Vec<f64> {
    dual_gradient(snap, alpha).iter().map(|g| -eta * g).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    MaxIters,
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub lambda: Vec<f64>,
    /// Update applied after this point; empty for the final record.
    pub delta: Vec<f64>,
    pub gap: f64,
    /// `max_j |<F_j, xi> - alpha_j|`
    pub residual: f64,
    pub wall_ns: u64,
}

#[derive(Clone, Debug)]
pub struct SolverTrace {
    pub config: SolverConfig,
    pub records: Vec<TraceRecord>,
    pub status: Status,
    pub failure: Option<String>,
}

impl SolverTrace {
    /// Number of updates performed.
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    /// First iteration index whose gap is at most `precision`.
    pub fn steps_to(&self, precision: f64) -> Option<usize> {
        self.records.iter().find(|r| r.gap <= precision).map(|r| r.iter)
    }

    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace holds the initial point")
    }

    pub fn final_lambda(&self) -> &[f64] {
        &self.last().lambda
    }

    pub fn final_gap(&self) -> f64 {
        self.last().gap
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gap).collect()
    }
}

enum Accelerator {
    None,
    Anderson(AndersonHistory),
    Lbfgs { history: LbfgsHistory, prev: Option<(Vec<f64>, Vec<f64>)>, frozen_h0: Option<f64> },
}

struct Stepper<'a> {
    config: &'a SolverConfig,
    alpha: &'a [f64],
    eta: f64,
    accel: Accelerator,
    prev_gap: Option<f64>,
}

impl<'a> Stepper<'a> {
    fn new(config: &'a SolverConfig, alpha: &'a [f64]) -> Self {
        let accel = match config.method {
            Method::AmQis => Accelerator::Anderson(AndersonHistory::new(config.history)),
            Method::LbfgsGd => Accelerator::Lbfgs { history: LbfgsHistory::new(config.history), prev: None, frozen_h0: config.eta },
            _ => Accelerator::None,
        };
        let eta = config.eta.unwrap_or(alpha.len() as f64);
        Self { config, alpha, eta, accel, prev_gap: None }
    }

    fn next(&mut self, snap: &DualEvaluation, gap: f64) -> Result<Vec<f64>> {
        let lambda = &snap.lambda;
        let diverging = self.prev_gap.is_some_and(|p| gap > DIVERGENCE_FACTOR * p);
        self.prev_gap = Some(gap);
        let delta = match &mut self.accel {
            Accelerator::None => match self.config.method {
                Method::Gd => gd_step(snap, self.alpha, self.eta),
                _ => qis_step(snap, self.alpha)?,
            },
            Accelerator::Anderson(hist) => {
                let r = qis_step(snap, self.alpha)?;
                hist.observe(lambda, &r);
                if diverging {
                    hist.reset();
                }
                let beta = match hist.latest() {
                    Some((dx, dr)) if self.config.use_bb => bb_mixing(dx, dr),
                    _ => 1.0,
                };
                let next = hist.step(lambda, &r, beta, self.config.rcond)?;
                sub(&next, lambda)
            }
            Accelerator::Lbfgs { history, prev, frozen_h0 } => {
                let g = dual_gradient(snap, self.alpha);
                if let Some((px, pg)) = prev.take() {
                    history.push(sub(lambda, &px), sub(&g, &pg));
                }
                *prev = Some((lambda.clone(), g.clone()));
                if frozen_h0.is_none() {
                    *frozen_h0 = history.bb_scale();
                }
                let bb = if self.config.use_bb { history.bb_scale() } else { None };
                if diverging {
                    history.clear();
                }
                let h0 = bb.or(*frozen_h0).unwrap_or(self.eta);
                history.direction(&g, h0)
            }
        };
        if let Some(bad) = delta.iter().find(|d| !d.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite update {bad}")));
        }
        Ok(delta)
    }
}

fn gap_at(instance: &ProblemInstance, snap: &DualEvaluation, residual: f64) -> f64 {
    match &instance.ground_truth {
        Some(gt) => (dual_objective(snap, &instance.alpha) - gt.dual_optimum).abs(),
        None => residual,
    }
}

/// Nanoseconds since the call; browsers without a monotonic clock read 0.
#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
fn stopwatch() -> impl Fn() -> u64 {
    let start = std::time::Instant::now();
    move || start.elapsed().as_nanos() as u64
}

#[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
fn stopwatch() -> impl Fn() -> u64 {
    || 0
}

/// Runs `config.method` from `lambda = 0` until the gap is at most
/// `config.tol` or `config.max_iters` updates have been made.
///
/// The gap is `|dual(lambda) - dual(lambda*)|` when the instance carries a
/// ground truth and the moment residual otherwise. Numerical failures end
/// the run and are reported through [`SolverTrace::status`].
pub fn run(instance: &ProblemInstance, config: &SolverConfig) -> Result<SolverTrace> {
    config.validate()?;
    if instance.alpha.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidArgument("target moments must be positive".into()));
    }
    let oracle = GibbsOracle::new(&instance.observables)?;
    let elapsed_ns = stopwatch();
    let mut stepper = Stepper::new(config, &instance.alpha);
    let mut records: Vec<TraceRecord> = Vec::new();
    let mut lambda = vec![0.0; instance.len()];
    let mut failure = None;
    let status = loop {
        let iter = records.len();
        let snap = match oracle.evaluate(&lambda) {
            Ok(s) => s,
            Err(e) => {
                failure = Some(e.to_string());
                break Status::NumericalFailure;
            }
        };
        let residual = norm_inf(&dual_gradient(&snap, &instance.alpha));
        let gap = gap_at(instance, &snap, residual);
        records.push(TraceRecord {
            iter,
            lambda: lambda.clone(),
            delta: Vec::new(),
            gap,
            residual,
            wall_ns: elapsed_ns(),
        });
        if !gap.is_finite() {
            failure = Some(format!("non-finite gap at iteration {iter}"));
            break Status::NumericalFailure;
        }
        if gap <= config.tol {
            break Status::Converged;
        }
        if iter == config.max_iters {
            break Status::MaxIters;
        }
        match stepper.next(&snap, gap) {
            Ok(delta) => {
                for (l, d) in lambda.iter_mut().zip(&delta) {
                    *l += d;
                }
                records.last_mut().expect("just pushed").delta = delta;
            }
            Err(e) => {
                failure = Some(e.to_string());
                break Status::NumericalFailure;
            }
        }
    };
    Ok(SolverTrace { config: config.clone(), records, status, failure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{snapshot, GibbsSnapshot};
    use crate::hermitian::HermitianOperator;
    use crate::model::{build_family, make_instance, FamilyKind, ObservableFamily};
    use crate::testutil::Lcg;

    fn scalar_snapshot(t: f64) -> GibbsSnapshot {
        let obs = ObservableFamily::from_operators(vec![HermitianOperator::from_real_diagonal(&[1.0, 0.0])], false).unwrap();
        snapshot(&[t], &obs, None).unwrap()
    }

    #[test]
    fn scalar_steps() {
        let snap = scalar_snapshot(0.0);
        let q = qis_step(&snap, &[0.8]).unwrap();
        assert!((q[0] - 1.6f64.ln()).abs() < 1e-15);
        assert!((q[0] - 0.470004).abs() < 1e-6);
        let g = gd_step(&snap, &[0.8], 1.0);
        assert!((g[0] - 0.3).abs() < 1e-15);
        assert!(qis_step(&snap, &[0.5]).unwrap()[0].abs() < 1e-15);
        assert_eq!(gd_step(&snap, &[0.5], 2.0)[0], 0.0);
    }

    #[test]
    fn zero_moment_is_reported() {
        let ops = vec![HermitianOperator::from_real_diagonal(&[1.0, 0.0]), HermitianOperator::zeros(2)];
        let obs = ObservableFamily::from_operators(ops, false).unwrap();
        let snap = snapshot(&[0.0, 0.0], &obs, None).unwrap();
        assert_eq!(qis_step(&snap, &[0.5, 0.5]).unwrap_err(), Error::NonPositiveMoment { index: 1, value: 0.0 });
    }

    #[test]
    fn qis_is_more_aggressive_than_unit_gd() {
        let mut rng = Lcg::new(14);
        let inst = make_instance(&build_family(FamilyKind::Ising, 3, 2).unwrap(), 1.0, false).unwrap();
        for _ in 0..20 {
            let lambda = rng.vec(inst.len(), 5.0);
            let snap = snapshot(&lambda, &inst.observables, None).unwrap();
            let eta = 0.5 + 0.5 * rng.next().abs();
            let q = qis_step(&snap, &inst.alpha).unwrap();
            let g = gd_step(&snap, &inst.alpha, eta);
            for (a, b) in q.iter().zip(&g) {
                assert!(a.abs() >= b.abs());
            }
        }
    }

    #[test]
    fn already_optimal_converges_immediately() {
        let fam = build_family(FamilyKind::Ising, 3, 1).unwrap();
        let fam = fam.clone().with_coefficients(&vec![0.0; fam.len()]).unwrap();
        let inst = make_instance(&fam, 1.0, false).unwrap();
        for method in Method::ALL {
            let trace = run(&inst, &SolverConfig::new(method)).unwrap();
            assert_eq!(trace.status, Status::Converged);
            assert!(trace.iterations() <= 2);
        }
    }

    #[test]
    fn qis_gap_is_monotone_and_converges() {
        let inst = make_instance(&build_family(FamilyKind::Local1D, 3, 3).unwrap(), 1.0, false).unwrap();
        let trace = run(&inst, &SolverConfig::new(Method::Qis).with_tol(1e-7)).unwrap();
        assert_eq!(trace.status, Status::Converged);
        for w in trace.records.windows(2) {
            assert!(w[1].gap <= w[0].gap + 1e-12);
        }
        assert_eq!(trace.records.len(), trace.iterations() + 1);
        assert!(trace.last().residual <= 10.0 * trace.config.tol.sqrt());
        for w in trace.records.windows(2) {
            let step = sub(&w[1].lambda, &w[0].lambda);
            for (u, v) in step.iter().zip(&w[0].delta) {
                assert!((u - v).abs() <= 1e-14 * (1.0 + v.abs()));
            }
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let inst = make_instance(&build_family(FamilyKind::Transversal1D, 3, 4).unwrap(), 1.0, false).unwrap();
        for method in Method::ALL {
            let cfg = SolverConfig::new(method).with_bb(true).with_tol(1e-9);
            let a = run(&inst, &cfg).unwrap();
            let b = run(&inst, &cfg).unwrap();
            assert_eq!(a.records.len(), b.records.len());
            for (x, y) in a.records.iter().zip(&b.records) {
                assert_eq!((x.gap.to_bits(), &x.lambda), (y.gap.to_bits(), &y.lambda));
            }
        }
    }

    #[test]
    fn accelerated_methods_converge_quickly() {
        let inst = make_instance(&build_family(FamilyKind::Local1D, 4, 11).unwrap(), 1.0, false).unwrap();
        for (method, bb) in [(Method::AmQis, true), (Method::LbfgsGd, false), (Method::LbfgsGd, true)] {
            let cfg = SolverConfig::new(method).with_bb(bb).with_tol(1e-7);
            let trace = run(&inst, &cfg).unwrap();
            assert_eq!(trace.status, Status::Converged, "{} bb={bb}: {:?}", method, trace.gaps());
        }
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(Method::Qis).with_tol(0.0).validate().is_err());
        let mut c = SolverConfig::new(Method::AmQis);
        c.history = 0;
        assert!(c.validate().is_err());
        assert!(SolverConfig::new(Method::Gd).with_eta(-1.0).validate().is_err());
        assert_eq!(SolverConfig::new(Method::LbfgsGd).with_bb(true).label(), "LBFGS-GD+BB");
    }
}
