//! WebAssembly bindings for the static page in `www/`.
//!
//! Each export takes plain numbers and strings and returns a JSON document
//! that the page plots on a canvas. The work is done by the `*_json`
//! functions, which are ordinary Rust and tested natively.

use qmaxent::analysis::{gauge_direction, jacobian_gd, jacobian_qis, qbp_kernel, quotient, QbpVariant};
use qmaxent::dense::RMatrix;
use qmaxent::gibbs::{hessian, snapshot};
use qmaxent::model::{build_family, make_instance, FamilyKind, ProblemInstance};
use qmaxent::solvers::{run, Method, SolverConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Larger systems take seconds per solve in a browser tab.
pub const MAX_QUBITS: usize = 5;

fn parse_kind(kind: &str) -> Result<FamilyKind, String> {
    match kind {
        "Ising" => Ok(FamilyKind::Ising),
        "Transversal1D" => Ok(FamilyKind::Transversal1D),
        "Local1D" => Ok(FamilyKind::Local1D),
        other => Err(format!("unknown family {other:?}")),
    }
}

fn demo_instance(kind: &str, n_qubits: usize, seed: u64, complete: bool) -> Result<ProblemInstance, String> {
    if !(2..=MAX_QUBITS).contains(&n_qubits) {
        return Err(format!("the demo supports 2 to {MAX_QUBITS} qubits, got {n_qubits}"));
    }
    let family = build_family(parse_kind(kind)?, n_qubits, seed).map_err(|e| e.to_string())?;
    make_instance(&family, 1.0, complete).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Curve {
    method: String,
    status: String,
    steps: Option<usize>,
    gaps: Vec<f64>,
}

#[derive(Serialize)]
struct Convergence {
    instance: String,
    tol: f64,
    curves: Vec<Curve>,
}

/// Dual gap per iteration for the four solvers.
pub fn convergence_json(kind: &str, n_qubits: usize, seed: u64, tol: f64, max_iters: usize) -> Result<String, String> {
    let inst = demo_instance(kind, n_qubits, seed, false)?;
    let configs = [
        SolverConfig::new(Method::Qis).with_max_iters(max_iters),
        SolverConfig::new(Method::Gd).with_max_iters(max_iters),
        SolverConfig::new(Method::AmQis).with_bb(true),
        SolverConfig::new(Method::LbfgsGd).with_bb(true),
    ];
    let mut curves = Vec::new();
    for cfg in configs {
        let trace = run(&inst, &cfg.with_tol(tol)).map_err(|e| e.to_string())?;
        curves.push(Curve {
            method: trace.config.label(),
            status: format!("{:?}", trace.status),
            steps: trace.steps_to(tol),
            gaps: trace.records.iter().map(|r| r.gap).collect(),
        });
    }
    serde_json::to_string(&Convergence { instance: inst.label, tol, curves }).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Kernels {
    beta: f64,
    omega: Vec<f64>,
    anticommutator: Vec<f64>,
    sandwich: Vec<f64>,
}

/// Samples of the two belief-propagation kernels on `[-omega_max, omega_max]`.
pub fn kernels_json(beta: f64, omega_max: f64, points: usize) -> Result<String, String> {
    if points < 2 || !(omega_max > 0.0) {
        return Err("need at least two points and a positive range".into());
    }
    let omega: Vec<f64> = (0..points).map(|i| -omega_max + 2.0 * omega_max * i as f64 / (points - 1) as f64).collect();
    let sample = |variant| omega.iter().map(|&w| qbp_kernel(w, beta, variant).map_err(|e| e.to_string())).collect::<Result<Vec<_>, _>>();
    let kernels = Kernels { beta, anticommutator: sample(QbpVariant::Anticommutator)?, sandwich: sample(QbpVariant::Sandwich)?, omega };
    serde_json::to_string(&kernels).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Spectrum {
    /// `(re, im)` pairs
    eigenvalues: Vec<(f64, f64)>,
    radius: f64,
}

#[derive(Serialize)]
struct Jacobians {
    instance: String,
    t: f64,
    qis: Spectrum,
    gd: Spectrum,
}

fn spectrum(j: &RMatrix, gauge: Option<&[f64]>) -> Result<Spectrum, String> {
    let j = match gauge {
        Some(u) => quotient(j, u),
        None => j.clone(),
    };
    let eigenvalues = j.eigenvalues().map_err(|e| e.to_string())?;
    let radius = eigenvalues.iter().map(|(re, im)| re.hypot(*im)).fold(0.0, f64::max);
    Ok(Spectrum { eigenvalues, radius })
}

/// Jacobian spectra of QIS and GD (step size m) at `t * lambda*`, so that
/// `t = 0` is the maximally mixed start and `t = 1` the optimum.
pub fn jacobians_json(kind: &str, n_qubits: usize, seed: u64, complete: bool, t: f64) -> Result<String, String> {
    let inst = demo_instance(kind, n_qubits, seed, complete)?;
    let star = &inst.ground_truth.as_ref().ok_or("instance has no ground truth")?.lambda;
    let lambda: Vec<f64> = star.iter().map(|l| t * l).collect();
    let snap = snapshot(&lambda, &inst.observables, None).map_err(|e| e.to_string())?;
    let bundle = hessian(&snap, &inst.observables).map_err(|e| e.to_string())?;
    let gauge = gauge_direction(&inst.observables);
    let qis = jacobian_qis(&bundle).map_err(|e| e.to_string())?;
    let gd = jacobian_gd(&bundle, inst.len() as f64);
    let out = Jacobians { instance: inst.label, t, qis: spectrum(&qis, gauge.as_deref())?, gd: spectrum(&gd, gauge.as_deref())? };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn convergence(kind: &str, n_qubits: usize, seed: u32, tol: f64, max_iters: usize) -> Result<String, JsError> {
    convergence_json(kind, n_qubits, seed as u64, tol, max_iters).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn kernels(beta: f64, omega_max: f64, points: usize) -> Result<String, JsError> {
    kernels_json(beta, omega_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn jacobians(kind: &str, n_qubits: usize, seed: u32, complete: bool, t: f64) -> Result<String, JsError> {
    jacobians_json(kind, n_qubits, seed as u64, complete, t).map_err(|e| JsError::new(&e))
}
