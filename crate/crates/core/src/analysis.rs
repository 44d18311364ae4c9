//! Numerical checks of the convergence theory.
//!
//! Jacobians of the QIS and gradient-descent maps, their spectral radii and
//! the empirical rates observed in solver traces; the operator inequalities
//! `L <= P` and `Lambda <= Delta`; and the two quantum belief propagation
//! channels whose kernels express the derivative of `exp(beta H)`.

use serde::{Deserialize, Serialize};

use crate::dense::{axpy, dot, norm2, sub, CMatrix, RMatrix};
use crate::error::{Error, Result};
use crate::gibbs::{hessian, snapshot, HessianBundle};
use crate::hermitian::{eig_herm, expm, EigenDecomposition, HermitianOperator, EXP_ARGUMENT_LIMIT};
use crate::model::{ObservableFamily, ProblemInstance};
use crate::solvers::{self, Method, SolverConfig, SolverTrace};

/// Ratios kept by [`empirical_rate`].
pub const RATE_WINDOW: usize = 10;
/// Central-difference step for first derivatives.
pub const FD_STEP: f64 = 1e-5;

/// `I - P^{-1} L`.
pub fn jacobian_qis(bundle: &HessianBundle) -> Result<RMatrix> {
    let p = bundle.p.diagonal();
    if let Some(index) = p.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::SingularMoments { index });
    }
    let m = p.len();
    Ok(RMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { 0.0 } - bundle.l[(i, j)] / p[i]))
}

/// `I - eta L`.
pub fn jacobian_gd(bundle: &HessianBundle, eta: f64) -> RMatrix {
    let mut j = RMatrix::identity(bundle.l.rows());
    j.add_scaled(&bundle.l, -eta);
    j
}

/// `I - P^{-1/2} L P^{-1/2}`, symmetric and similar to [`jacobian_qis`].
pub fn jacobian_qis_symmetric(bundle: &HessianBundle) -> Result<RMatrix> {
    let p = bundle.p.diagonal();
    if let Some(index) = p.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::SingularMoments { index });
    }
    let s: Vec<f64> = p.iter().map(|v| v.sqrt().recip()).collect();
    let m = p.len();
    Ok(RMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { 0.0 } - s[i] * bundle.l[(i, j)] * s[j]))
}

/// Largest eigenvalue modulus. With `symmetric` set only the symmetric part
/// of `j` is used.
pub fn spectral_radius(j: &RMatrix, symmetric: bool) -> Result<f64> {
    if symmetric {
        Ok(j.symmetric_eigenvalues()?.iter().fold(0.0f64, |r, v| r.max(v.abs())))
    } else {
        Ok(j.eigenvalues()?.iter().fold(0.0f64, |r, &(re, im)| r.max(re.hypot(im))))
    }
}

/// Spectral radius of the QIS Jacobian through its symmetric form.
pub fn spectral_radius_qis(bundle: &HessianBundle) -> Result<f64> {
    spectral_radius(&jacobian_qis_symmetric(bundle)?, true)
}

/// Unit vector `1/sqrt(m)` for a completed family: shifting every `lambda_j`
/// by the same amount multiplies `exp(lambda . F)` by a scalar and leaves the
/// Gibbs state, and both iteration maps, unchanged.
pub fn gauge_direction(obs: &ObservableFamily) -> Option<Vec<f64>> {
    obs.complete.then(|| vec![(obs.len() as f64).sqrt().recip(); obs.len()])
}

/// Matrix of `a` on the quotient by the invariant unit direction `u`,
/// written in an orthonormal basis of the complement of `u`.
pub fn quotient(a: &RMatrix, u: &[f64]) -> RMatrix {
    let m = u.len();
    // Householder reflector sending e_1 to u; its other columns span u^perp.
    let mut w = u.to_vec();
    w[0] -= 1.0;
    let ww = dot(&w, &w);
    let basis = RMatrix::from_fn(m, m - 1, |i, k| {
        let j = k + 1;
        let e = if i == j { 1.0 } else { 0.0 };
        if ww == 0.0 { e } else { e - 2.0 * w[i] * w[j] / ww }
    });
    basis.transpose().matmul(&a.matmul(&basis))
}

/// Spectral radius of the QIS Jacobian, restricted to the complement of the
/// gauge direction when there is one.
pub fn spectral_radius_qis_modulo(bundle: &HessianBundle, gauge: Option<&[f64]>) -> Result<f64> {
    let mut s = jacobian_qis_symmetric(bundle)?;
    if let Some(u) = gauge {
        // S P^{1/2} u = P^{1/2} u; deflate that eigenvector.
        let mut v: Vec<f64> = bundle.p.diagonal().iter().zip(u).map(|(p, x)| p.sqrt() * x).collect();
        let n = norm2(&v);
        v.iter_mut().for_each(|x| *x /= n);
        s.add_scaled(&RMatrix::from_fn(v.len(), v.len(), |i, j| v[i] * v[j]), -1.0);
    }
    spectral_radius(&s, true)
}

/// Median of the last ten ratios `|lambda_{t+1} - lambda*| / |lambda_t - lambda*|`
/// along the trace.
pub fn empirical_rate(trace: &SolverTrace, lambda_star: &[f64]) -> Result<f64> {
    empirical_rate_modulo(trace, lambda_star, None)
}

/// [`empirical_rate`] with errors measured orthogonally to a unit `gauge`
/// direction along which the state does not change.
pub fn empirical_rate_modulo(trace: &SolverTrace, lambda_star: &[f64], gauge: Option<&[f64]>) -> Result<f64> {
    let needed = RATE_WINDOW + 2;
    if trace.iterations() < needed {
        return Err(Error::InsufficientData { needed, found: trace.iterations() });
    }
    let errors: Vec<f64> = trace
        .records
        .iter()
        .map(|r| {
            let mut e = sub(&r.lambda, lambda_star);
            if let Some(u) = gauge {
                let c = dot(&e, u);
                axpy(-c, u, &mut e);
            }
            norm2(&e)
        })
        .collect();
    let mut ratios: Vec<f64> = errors.windows(2).rev().take(RATE_WINDOW).map(|w| w[1] / w[0]).collect();
    if ratios.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidArgument("trace reached lambda* exactly; rate undefined".into()));
    }
    ratios.sort_by(f64::total_cmp);
    Ok(0.5 * (ratios[RATE_WINDOW / 2 - 1] + ratios[RATE_WINDOW / 2]))
}

/// Margins of the operator inequalities at one dual point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundMargins {
    /// `lambda_min(P - L)`
    pub p_minus_l: f64,
    /// Smallest entry of `Lambda`.
    pub lambda_min_entry: f64,
    /// Smallest column sum of `Delta - Lambda`.
    pub column_sum: f64,
    /// `||Lambda - Z (L + Q)||_F / Z`
    pub identity_residual: f64,
    pub z: f64,
}

impl BoundMargins {
    pub const P_MINUS_L_TOL: f64 = 1e-10;
    pub const LAMBDA_ENTRY_TOL: f64 = 1e-12;
    pub const COLUMN_SUM_TOL: f64 = 1e-10;
    pub const IDENTITY_TOL: f64 = 1e-8;

    pub fn passes(&self) -> bool {
        self.p_minus_l >= -Self::P_MINUS_L_TOL
            && self.lambda_min_entry >= -Self::LAMBDA_ENTRY_TOL
            && self.column_sum >= -Self::COLUMN_SUM_TOL * self.z
            && self.identity_residual <= Self::IDENTITY_TOL
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BoundCheck {
    /// Some `F_j` is not PSD or `sum_j F_j` exceeds the identity; the
    /// inequalities are not expected to hold and no margins are computed.
    HypothesesUnmet { min_eig_f: f64, max_eig_sum: f64 },
    Checked(BoundMargins),
}

impl BoundCheck {
    pub fn passes(&self) -> bool {
        matches!(self, BoundCheck::Checked(m) if m.passes())
    }
}

/// Measures `L <= P`, `Lambda >= 0` entrywise, the diagonal dominance of
/// `Delta - Lambda` and the identity `Lambda = Z (L + Q)`.
pub fn verify_bounds(bundle: &HessianBundle, obs: &ObservableFamily) -> Result<BoundCheck> {
    let report = obs.check_constraints()?;
    if !report.holds(false) {
        return Ok(BoundCheck::HypothesesUnmet { min_eig_f: report.min_eig, max_eig_sum: report.max_sum_eig });
    }
    let m = bundle.l.rows();
    let p_minus_l = bundle.p.sub(&bundle.l).symmetric_eigenvalues()?.first().copied().unwrap_or(0.0);
    let column_sum = (0..m)
        .map(|k| (0..m).map(|j| bundle.delta[(j, k)] - bundle.lambda_hess[(j, k)]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let mut expected = bundle.l.clone();
    expected.add_scaled(&bundle.q, 1.0);
    let identity_residual = bundle.lambda_hess.sub(&expected.scaled(bundle.z)).frobenius_norm() / bundle.z;
    Ok(BoundCheck::Checked(BoundMargins {
        p_minus_l,
        lambda_min_entry: bundle.lambda_hess.min_entry(),
        column_sum,
        identity_residual,
        z: bundle.z,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QbpVariant {
    /// `Phi`, kernel `tanh(x) / x` with `x = beta omega / 2`.
    Anticommutator,
    /// `Psi`, kernel `sinh(x) / x`.
    Sandwich,
}

/// Kernel value at `omega = h_a - h_b`; both kernels are 1 at `omega = 0`.
pub fn qbp_kernel(omega: f64, beta: f64, variant: QbpVariant) -> Result<f64> {
    let bw = beta * omega;
    if !(bw.abs() <= EXP_ARGUMENT_LIMIT) {
        return Err(Error::Overflow { argument: bw });
    }
    let x = 0.5 * bw;
    let x2 = x * x;
    Ok(match variant {
        QbpVariant::Anticommutator if x.abs() < 1e-4 => 1.0 - x2 / 3.0 + 2.0 * x2 * x2 / 15.0,
        QbpVariant::Anticommutator => x.tanh() / x,
        QbpVariant::Sandwich if x.abs() < 1e-4 => 1.0 + x2 / 6.0 + x2 * x2 / 120.0,
        QbpVariant::Sandwich => x.sinh() / x,
    })
}

/// `Phi_H(V)` or `Psi_H(V)`: the kernel applied entrywise in the eigenbasis
/// of `H`.
pub fn qbp_channel(eig: &EigenDecomposition, v: &HermitianOperator, beta: f64, variant: QbpVariant) -> Result<HermitianOperator> {
    if v.dim() != eig.dim() {
        return Err(Error::DimensionMismatch { expected: eig.dim(), found: v.dim() });
    }
    let h = &eig.eigenvalues;
    let d = h.len();
    let mut kernel = RMatrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let k = qbp_kernel(h[a] - h[b], beta, variant)?;
            kernel[(a, b)] = k;
            kernel[(b, a)] = k;
        }
    }
    let v_eig = eig.to_eigenbasis(v.matrix());
    Ok(HermitianOperator::from_hermitian_part(&eig.from_eigenbasis(&v_eig.hadamard_real(&kernel))))
}

/// Relative Frobenius deviations of the closed-form derivatives of
/// `exp(beta (H + s V))` at `s = 0` from a central difference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QbpResiduals {
    /// `(beta/2) {exp(beta H), Phi(V)}` against the finite difference.
    pub anticommutator: f64,
    /// `beta exp(beta H/2) Psi(V) exp(beta H/2)` against the finite difference.
    pub sandwich: f64,
    /// The two closed forms against each other.
    pub agreement: f64,
}

impl QbpResiduals {
    pub const FD_TOL: f64 = 1e-6;
    pub const AGREEMENT_TOL: f64 = 1e-9;

    pub fn passes(&self) -> bool {
        self.anticommutator <= Self::FD_TOL && self.sandwich <= Self::FD_TOL && self.agreement <= Self::AGREEMENT_TOL
    }
}

fn relative_deviation(a: &CMatrix, reference: &CMatrix) -> f64 {
    a.sub(reference).frobenius_norm() / reference.frobenius_norm().max(f64::MIN_POSITIVE)
}

pub fn verify_qbp_identities(h: &HermitianOperator, v: &HermitianOperator, beta: f64) -> Result<QbpResiduals> {
    let eig = eig_herm(h)?;
    let at = |s: f64| {
        let mut shifted = h.clone();
        shifted.add_scaled(v, s);
        expm(&shifted.scaled(beta))
    };
    let fd = at(FD_STEP)?.sub(&at(-FD_STEP)?).scaled(0.5 / FD_STEP);

    let exp_full = eig.compose(&eig.eigenvalues.iter().map(|x| (beta * x).exp()).collect::<Vec<_>>());
    let exp_half = eig.compose(&eig.eigenvalues.iter().map(|x| (0.5 * beta * x).exp()).collect::<Vec<_>>());
    let phi = qbp_channel(&eig, v, beta, QbpVariant::Anticommutator)?;
    let psi = qbp_channel(&eig, v, beta, QbpVariant::Sandwich)?;
    let e = exp_full.matrix();
    let anti = e.matmul(phi.matrix()).add(&phi.matrix().matmul(e)).scaled(0.5 * beta);
    let sandwich = exp_half.matrix().matmul(psi.matrix()).matmul(exp_half.matrix()).scaled(beta);
    Ok(QbpResiduals {
        anticommutator: relative_deviation(&anti, fd.matrix()),
        sandwich: relative_deviation(&sandwich, fd.matrix()),
        agreement: relative_deviation(&anti, &sandwich),
    })
}

/// Central-difference Jacobian of `lambda -> lambda + step(lambda)`.
pub fn finite_difference_jacobian(lambda: &[f64], h: f64, map: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<RMatrix> {
    let m = lambda.len();
    let mut columns = Vec::with_capacity(m);
    let mut probe = lambda.to_vec();
    for k in 0..m {
        probe[k] = lambda[k] + h;
        let plus = map(&probe)?;
        probe[k] = lambda[k] - h;
        let minus = map(&probe)?;
        probe[k] = lambda[k];
        columns.push(plus.iter().zip(&minus).map(|(p, q)| (p - q) / (2.0 * h)).collect());
    }
    Ok(RMatrix::from_columns(&columns))
}

/// The QIS update map `lambda -> lambda + ln alpha - ln <F, xi(lambda)>`.
pub fn qis_map(obs: &ObservableFamily, alpha: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
    let snap = snapshot(lambda, obs, None)?;
    let delta = solvers::qis_step(&snap, alpha)?;
    Ok(lambda.iter().zip(&delta).map(|(l, d)| l + d).collect())
}

/// The gradient-descent map `lambda -> lambda - eta grad`.
pub fn gd_map(obs: &ObservableFamily, alpha: &[f64], lambda: &[f64], eta: f64) -> Result<Vec<f64>> {
    let snap = snapshot(lambda, obs, None)?;
    let delta = solvers::gd_step(&snap, alpha, eta);
    Ok(lambda.iter().zip(&delta).map(|(l, d)| l + d).collect())
}

/// One named quantity compared against its tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance condition, e.g. `<= 1e-5`.
    pub condition: String,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, condition: format!("<= {limit:e}"), passed: value <= limit }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, condition: format!(">= {limit:e}"), passed: value >= limit }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QbpReport {
    pub residuals: QbpResiduals,
    /// Smallest eigenvalue of `Phi(V)` for the PSD probe `V`.
    pub phi_min_eig: f64,
    /// Smallest eigenvalue of `Psi(V)`. Reported only: `sinh(x)/x` exceeds
    /// its value at 0, so it is not a positive-definite function and `Psi`
    /// does not preserve positivity once `H` has distinct eigenvalues.
    pub psi_min_eig: f64,
    /// `|tr Psi(V) - tr V|`
    pub trace_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub label: String,
    pub lambda_star: Vec<f64>,
    pub eta: f64,
    pub jacobian_qis: RMatrix,
    pub jacobian_gd: RMatrix,
    pub spectral_radius_qis: f64,
    pub spectral_radius_gd: f64,
    pub fd_spectral_radius_qis: f64,
    pub fd_spectral_radius_gd: f64,
    pub min_eig_l: f64,
    pub bounds: BoundCheck,
    pub qbp: QbpReport,
    pub empirical_rate_qis: Option<f64>,
    pub empirical_rate_gd: Option<f64>,
    pub checks: Vec<Check>,
}

impl DiagnosticsReport {
    pub fn passes(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseOptions {
    /// Iteration cap for the QIS and GD runs used to measure rates.
    pub rate_max_iters: usize,
    /// Gap at which those runs stop.
    pub rate_tol: f64,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self { rate_max_iters: 20_000, rate_tol: 1e-12 }
    }
}

/// `lambda*` from the ground truth if present, else a tight L-BFGS solve.
pub fn reference_optimum(instance: &ProblemInstance) -> Result<Vec<f64>> {
    if let Some(gt) = &instance.ground_truth {
        return Ok(gt.lambda.clone());
    }
    let config = SolverConfig::new(Method::LbfgsGd).with_bb(true).with_tol(1e-13).with_max_iters(2000);
    let trace = solvers::run(instance, &config)?;
    if trace.status != solvers::Status::Converged {
        return Err(Error::InvalidArgument(format!(
            "reference solve stopped with {:?} at residual {:e}",
            trace.status,
            trace.final_gap()
        )));
    }
    Ok(trace.final_lambda().to_vec())
}

fn rate_of(instance: &ProblemInstance, config: SolverConfig, lambda_star: &[f64], gauge: Option<&[f64]>) -> Option<f64> {
    let trace = solvers::run(instance, &config).ok()?;
    empirical_rate_modulo(&trace, lambda_star, gauge).ok()
}

/// Runs every check at the optimum of `instance` with `eta = m` for GD. For a
/// completed family, radii, rates and `min_eig_l` refer to the quotient by
/// the gauge direction.
pub fn diagnose(instance: &ProblemInstance, options: &DiagnoseOptions) -> Result<DiagnosticsReport> {
    let obs = &instance.observables;
    let alpha = &instance.alpha;
    let lambda_star = reference_optimum(instance)?;
    let eta = instance.len() as f64;
    let snap = snapshot(&lambda_star, obs, None)?;
    let bundle = hessian(&snap, obs)?;
    let mut checks = Vec::new();

    let jacobian_qis = jacobian_qis(&bundle)?;
    let jacobian_gd = jacobian_gd(&bundle, eta);
    let fd_qis = finite_difference_jacobian(&lambda_star, FD_STEP, |l| qis_map(obs, alpha, l))?;
    let fd_gd = finite_difference_jacobian(&lambda_star, FD_STEP, |l| gd_map(obs, alpha, l, eta))?;
    checks.push(Check::at_most("jacobian_qis_fd_max_entry", fd_qis.sub(&jacobian_qis).max_abs(), 1e-5));
    checks.push(Check::at_most("jacobian_gd_fd_max_entry", fd_gd.sub(&jacobian_gd).max_abs(), 1e-5));

    let gauge = gauge_direction(obs);
    let on_quotient = |a: &RMatrix| match &gauge {
        Some(u) => quotient(a, u),
        None => a.clone(),
    };
    let spectral_radius_qis = spectral_radius_qis_modulo(&bundle, gauge.as_deref())?;
    let direct = spectral_radius(&on_quotient(&jacobian_qis), false)?;
    let spectral_radius_gd = spectral_radius(&on_quotient(&jacobian_gd), true)?;
    let fd_spectral_radius_qis = spectral_radius(&on_quotient(&fd_qis), false)?;
    let fd_spectral_radius_gd = spectral_radius(&on_quotient(&fd_gd), false)?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    checks.push(Check::at_most("spectral_radius_qis_similarity", (direct - spectral_radius_qis).abs(), 1e-10));
    checks.push(Check::at_most("spectral_radius_qis_fd_rel", rel(fd_spectral_radius_qis, spectral_radius_qis), 1e-4));
    checks.push(Check::at_most("spectral_radius_gd_fd_rel", rel(fd_spectral_radius_gd, spectral_radius_gd), 1e-4));

    let min_eig_l = on_quotient(&bundle.l).symmetric_eigenvalues()?.first().copied().unwrap_or(0.0);
    checks.push(Check { name: "min_eig_l".into(), value: min_eig_l, condition: "> 0".into(), passed: min_eig_l > 0.0 });

    let bounds = verify_bounds(&bundle, obs)?;
    match &bounds {
        BoundCheck::HypothesesUnmet { min_eig_f, .. } => {
            checks.push(Check { name: "bound_hypotheses".into(), value: *min_eig_f, condition: "F_j >= 0, sum F_j <= I".into(), passed: false });
        }
        BoundCheck::Checked(b) => {
            checks.push(Check::at_least("p_minus_l_min_eig", b.p_minus_l, -BoundMargins::P_MINUS_L_TOL));
            checks.push(Check::at_least("lambda_min_entry", b.lambda_min_entry, -BoundMargins::LAMBDA_ENTRY_TOL));
            checks.push(Check::at_least("delta_minus_lambda_column_sum_over_z", b.column_sum / b.z, -BoundMargins::COLUMN_SUM_TOL));
            checks.push(Check::at_most("lambda_identity_residual", b.identity_residual, BoundMargins::IDENTITY_TOL));
            let eigs = jacobian_qis_symmetric(&bundle)?.symmetric_eigenvalues()?;
            let (lo, hi) = (eigs.first().copied().unwrap_or(0.0), eigs.last().copied().unwrap_or(0.0));
            checks.push(Check::at_least("jacobian_qis_min_eig", lo, -1e-10));
            checks.push(Check::at_most("jacobian_qis_max_eig", hi, 1.0 + 1e-10));
        }
    }

    // QBP at the Gibbs Hamiltonian itself, probed with the first observable.
    let probe = &obs.operators()[0];
    let residuals = verify_qbp_identities(&snap.hamiltonian, probe, 1.0)?;
    let phi = qbp_channel(&snap.eig, probe, 1.0, QbpVariant::Anticommutator)?;
    let psi = qbp_channel(&snap.eig, probe, 1.0, QbpVariant::Sandwich)?;
    let qbp = QbpReport {
        residuals,
        phi_min_eig: phi.min_eigenvalue()?,
        psi_min_eig: psi.min_eigenvalue()?,
        trace_error: (psi.trace() - probe.trace()).abs(),
    };
    checks.push(Check::at_most("qbp_anticommutator_rel", residuals.anticommutator, QbpResiduals::FD_TOL));
    checks.push(Check::at_most("qbp_sandwich_rel", residuals.sandwich, QbpResiduals::FD_TOL));
    checks.push(Check::at_most("qbp_forms_agreement_rel", residuals.agreement, QbpResiduals::AGREEMENT_TOL));
    if probe.min_eigenvalue()? >= 0.0 {
        checks.push(Check::at_least("phi_min_eig", qbp.phi_min_eig, -1e-12));
    }
    checks.push(Check::at_most("psi_trace_error", qbp.trace_error, 1e-10));

    let base = |method| SolverConfig::new(method).with_tol(options.rate_tol).with_max_iters(options.rate_max_iters);
    let empirical_rate_qis = rate_of(instance, base(Method::Qis), &lambda_star, gauge.as_deref());
    let empirical_rate_gd = rate_of(instance, base(Method::Gd).with_eta(eta), &lambda_star, gauge.as_deref());
    match empirical_rate_qis {
        Some(r) => checks.push(Check::at_most("empirical_rate_qis_rel", rel(r, spectral_radius_qis), 0.15)),
        None => checks.push(Check { name: "empirical_rate_qis_rel".into(), value: f64::NAN, condition: "trace available".into(), passed: false }),
    }
    if let (Some(q), Some(g)) = (empirical_rate_qis, empirical_rate_gd) {
        checks.push(Check { name: "rate_qis_minus_gd".into(), value: q - g, condition: "<= 0".into(), passed: q <= g });
    }

    Ok(DiagnosticsReport {
        label: instance.label.clone(),
        lambda_star,
        eta,
        jacobian_qis,
        jacobian_gd,
        spectral_radius_qis,
        spectral_radius_gd,
        fd_spectral_radius_qis,
        fd_spectral_radius_gd,
        min_eig_l,
        bounds,
        qbp,
        empirical_rate_qis,
        empirical_rate_gd,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::C64;
    use crate::model::{build_family, complete_family, make_instance, normalize_family, FamilyKind};
    use crate::solvers::{Status, TraceRecord};
    use crate::testutil::{random_hermitian, random_psd, Lcg};

    fn scalar_bundle() -> HessianBundle {
        let obs = ObservableFamily::from_operators(vec![HermitianOperator::from_real_diagonal(&[1.0, 0.0])], false).unwrap();
        hessian(&snapshot(&[0.0], &obs, None).unwrap(), &obs).unwrap()
    }

    #[test]
    fn scalar_jacobians() {
        let b = scalar_bundle();
        // p = 1/2, L = p (1 - p)
        assert!((b.l[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((jacobian_qis(&b).unwrap()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((jacobian_gd(&b, 1.0)[(0, 0)] - 0.75).abs() < 1e-15);
        assert_eq!(jacobian_gd(&b, 0.0), RMatrix::identity(1));
    }

    #[test]
    fn zero_moment_makes_qis_jacobian_singular() {
        let ops = vec![HermitianOperator::from_real_diagonal(&[1.0, 0.0]), HermitianOperator::zeros(2)];
        let obs = ObservableFamily::from_operators(ops, false).unwrap();
        let b = hessian(&snapshot(&[0.0, 0.0], &obs, None).unwrap(), &obs).unwrap();
        assert_eq!(jacobian_qis(&b).unwrap_err(), Error::SingularMoments { index: 1 });
    }

    #[test]
    fn spectral_radius_examples() {
        assert_eq!(spectral_radius(&RMatrix::identity(3), true).unwrap(), 1.0);
        assert!((spectral_radius(&RMatrix::identity(3), false).unwrap() - 1.0).abs() < 1e-14);
        let d = RMatrix::from_diagonal(&[0.3, -0.7]);
        assert!((spectral_radius(&d, true).unwrap() - 0.7).abs() < 1e-15);
        assert!((spectral_radius(&d, false).unwrap() - 0.7).abs() < 1e-14);
        // rotation by 90 degrees scaled by 0.5: eigenvalues +-0.5i
        let rot = RMatrix::from_fn(2, 2, |i, j| [[0.0, -0.5], [0.5, 0.0]][i][j]);
        assert!((spectral_radius(&rot, false).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = Lcg::new(5);
        for (kind, seed) in [(FamilyKind::Local1D, 1), (FamilyKind::Ising, 2), (FamilyKind::Transversal1D, 3)] {
            let inst = make_instance(&build_family(kind, 3, seed).unwrap(), 1.0, false).unwrap();
            let obs = &inst.observables;
            let lambda: Vec<f64> = inst.ground_truth.as_ref().unwrap().lambda.iter().map(|l| l + 0.3 * rng.next()).collect();
            let b = hessian(&snapshot(&lambda, obs, None).unwrap(), obs).unwrap();
            let eta = inst.len() as f64;
            let fd_q = finite_difference_jacobian(&lambda, FD_STEP, |l| qis_map(obs, &inst.alpha, l)).unwrap();
            let fd_g = finite_difference_jacobian(&lambda, FD_STEP, |l| gd_map(obs, &inst.alpha, l, eta)).unwrap();
            assert!(fd_q.sub(&jacobian_qis(&b).unwrap()).max_abs() < 1e-5, "{kind}");
            assert!(fd_g.sub(&jacobian_gd(&b, eta)).max_abs() < 1e-5, "{kind}");

            let sym = spectral_radius_qis(&b).unwrap();
            let direct = spectral_radius(&jacobian_qis(&b).unwrap(), false).unwrap();
            assert!((sym - direct).abs() < 1e-10);
            assert!((0.0..=1.0).contains(&sym));
        }
    }

    #[test]
    fn commuting_family_gives_classical_jacobian() {
        // diagonal F: L is the covariance of the indicator features under p
        let diags: [&[f64]; 2] = [&[0.5, 0.0, 0.25, 0.0], &[0.0, 0.5, 0.25, 0.25]];
        let obs = ObservableFamily::from_operators(diags.iter().map(|d| HermitianOperator::from_real_diagonal(d)).collect(), false).unwrap();
        let lambda = [0.4, -0.9];
        let b = hessian(&snapshot(&lambda, &obs, None).unwrap(), &obs).unwrap();
        let w: Vec<f64> = (0..4).map(|x| (lambda[0] * diags[0][x] + lambda[1] * diags[1][x]).exp()).collect();
        let z: f64 = w.iter().sum();
        let mean = |f: &dyn Fn(usize) -> f64| (0..4).map(|x| w[x] * f(x)).sum::<f64>() / z;
        for j in 0..2 {
            let pj = mean(&|x| diags[j][x]);
            for k in 0..2 {
                let cov = mean(&|x| diags[j][x] * diags[k][x]) - pj * mean(&|x| diags[k][x]);
                let expected = if j == k { 1.0 } else { 0.0 } - cov / pj;
                assert!((jacobian_qis(&b).unwrap()[(j, k)] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn quotient_drops_the_invariant_direction() {
        // Hadamard columns: u = h0 is kept invariant with eigenvalue 1
        let h = [[0.5, 0.5, 0.5, 0.5], [0.5, -0.5, 0.5, -0.5], [0.5, 0.5, -0.5, -0.5], [0.5, -0.5, -0.5, 0.5]];
        let eigs = [1.0, 0.3, -0.6, 0.1];
        let a = RMatrix::from_fn(4, 4, |i, j| (0..4).map(|k| eigs[k] * h[k][i] * h[k][j]).sum());
        let q = quotient(&a, &h[0]);
        assert_eq!((q.rows(), q.cols()), (3, 3));
        let mut got = q.symmetric_eigenvalues().unwrap();
        got.sort_by(f64::total_cmp);
        for (g, e) in got.iter().zip([-0.6, 0.1, 0.3]) {
            assert!((g - e).abs() < 1e-14);
        }
        assert!((spectral_radius(&q, false).unwrap() - 0.6).abs() < 1e-14);
    }

    fn linear_trace(rate: f64, len: usize) -> SolverTrace {
        let records = (0..len)
            .map(|t| TraceRecord { iter: t, lambda: vec![rate.powi(t as i32), 0.0], delta: Vec::new(), gap: 0.0, residual: 0.0, wall_ns: 0 })
            .collect();
        SolverTrace { config: SolverConfig::new(Method::Qis), records, status: Status::Converged, failure: None }
    }

    #[test]
    fn empirical_rate_of_linear_map() {
        assert_eq!(empirical_rate(&linear_trace(0.5, 30), &[0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(
            empirical_rate(&linear_trace(0.5, 12), &[0.0, 0.0]).unwrap_err(),
            Error::InsufficientData { needed: 12, found: 11 }
        );
        assert!(empirical_rate(&linear_trace(0.5, 13), &[0.0, 0.0]).is_ok());
    }

    #[test]
    fn bounds_hold_at_origin_and_random_points() {
        let mut rng = Lcg::new(2);
        for n in 2..=3 {
            let obs = normalize_family(&build_family(FamilyKind::Local1D, n, 4).unwrap()).unwrap();
            for family in [obs.clone(), complete_family(&obs).unwrap()] {
                for scale in [0.0, 3.0, 30.0] {
                    let lambda = rng.vec(family.len(), scale);
                    let b = hessian(&snapshot(&lambda, &family, None).unwrap(), &family).unwrap();
                    let check = verify_bounds(&b, &family).unwrap();
                    assert!(check.passes(), "{check:?}");
                }
            }
        }
    }

    #[test]
    fn non_psd_family_reports_unmet_hypotheses() {
        let ops = vec![HermitianOperator::from_real_diagonal(&[0.5, -0.1]), HermitianOperator::from_real_diagonal(&[0.2, 0.3])];
        let obs = ObservableFamily::from_operators(ops, false).unwrap();
        let b = hessian(&snapshot(&[0.1, 0.2], &obs, None).unwrap(), &obs).unwrap();
        match verify_bounds(&b, &obs).unwrap() {
            BoundCheck::HypothesesUnmet { min_eig_f, .. } => assert!((min_eig_f + 0.1).abs() < 1e-14),
            other => panic!("expected unmet hypotheses, got {other:?}"),
        }
    }

    #[test]
    fn kernels_at_zero_and_overflow() {
        for variant in [QbpVariant::Anticommutator, QbpVariant::Sandwich] {
            assert_eq!(qbp_kernel(0.0, 1.0, variant).unwrap(), 1.0);
            // series and closed form agree across the switch
            let (below, above) = (qbp_kernel(1.999e-4, 1.0, variant).unwrap(), qbp_kernel(2.001e-4, 1.0, variant).unwrap());
            assert!((below - above).abs() < 1e-11);
            assert!(matches!(qbp_kernel(800.0, 1.0, variant), Err(Error::Overflow { .. })));
        }
        assert!((qbp_kernel(2.0, 1.0, QbpVariant::Anticommutator).unwrap() - 1f64.tanh()).abs() < 1e-15);
        assert!((qbp_kernel(2.0, 1.0, QbpVariant::Sandwich).unwrap() - 1f64.sinh()).abs() < 1e-15);
    }

    #[test]
    fn channels_are_identity_for_zero_hamiltonian() {
        let mut rng = Lcg::new(9);
        let eig = eig_herm(&HermitianOperator::zeros(5)).unwrap();
        let v = random_hermitian(&mut rng, 5, 1.0);
        for variant in [QbpVariant::Anticommutator, QbpVariant::Sandwich] {
            assert!(qbp_channel(&eig, &v, 2.0, variant).unwrap().sub(&v).frobenius_norm() < 1e-14);
        }
    }

    #[test]
    fn sandwich_preserves_trace_and_anticommutator_preserves_positivity() {
        let mut rng = Lcg::new(31);
        for d in [2, 5, 8, 16] {
            let eig = eig_herm(&random_hermitian(&mut rng, d, 1.0)).unwrap();
            let v = random_psd(&mut rng, d);
            let psi = qbp_channel(&eig, &v, 1.5, QbpVariant::Sandwich).unwrap();
            assert!((psi.trace() - v.trace()).abs() < 1e-10 * v.trace().max(1.0));
            let phi = qbp_channel(&eig, &v, 1.5, QbpVariant::Anticommutator).unwrap();
            assert!(phi.min_eigenvalue().unwrap() >= -1e-12);
        }
    }

    #[test]
    fn sandwich_channel_is_not_positive() {
        // H = diag(1, -1), V = |u><u| with u = (1, -1)/sqrt(2): Psi(V) has
        // eigenvalues (1 +- sinh(1))/2.
        let eig = eig_herm(&HermitianOperator::from_real_diagonal(&[1.0, -1.0])).unwrap();
        let half = C64::new(0.5, 0.0);
        let v = HermitianOperator::new(CMatrix::from_fn(2, |i, j| if i == j { half } else { -half })).unwrap();
        let psi = qbp_channel(&eig, &v, 1.0, QbpVariant::Sandwich).unwrap();
        assert!((psi.min_eigenvalue().unwrap() - 0.5 * (1.0 - 1f64.sinh())).abs() < 1e-15);
        assert!(psi.min_eigenvalue().unwrap() < -0.08);
    }

    #[test]
    fn derivative_forms_match_finite_differences() {
        let mut rng = Lcg::new(17);
        for beta in [0.1, 1.0, 3.0] {
            let h = random_hermitian(&mut rng, 8, 1.0);
            let v = random_hermitian(&mut rng, 8, 1.0);
            let r = verify_qbp_identities(&h, &v, beta).unwrap();
            assert!(r.passes(), "beta {beta}: {r:?}");
        }
    }

    #[test]
    fn commuting_derivative_has_closed_form() {
        let h = HermitianOperator::from_real_diagonal(&[0.3, -1.2, 0.8]);
        let v = HermitianOperator::from_real_diagonal(&[1.0, 0.5, -2.0]);
        let beta = 1.7;
        let r = verify_qbp_identities(&h, &v, beta).unwrap();
        assert!(r.anticommutator < 1e-9 && r.sandwich < 1e-9 && r.agreement < 1e-12, "{r:?}");
        // beta V exp(beta H) directly against the sandwich form
        let eig = eig_herm(&h).unwrap();
        let psi = qbp_channel(&eig, &v, beta, QbpVariant::Sandwich).unwrap();
        assert!(psi.sub(&v).frobenius_norm() < 1e-15);
        let expected = [0.3f64, -1.2, 0.8].iter().zip([1.0, 0.5, -2.0]).map(|(h, v)| beta * v * (beta * h).exp()).collect::<Vec<_>>();
        let e = eig.compose(&eig.eigenvalues.iter().map(|x| (0.5 * beta * x).exp()).collect::<Vec<_>>());
        let sandwich = e.matrix().matmul(psi.matrix()).matmul(e.matrix()).scaled(beta);
        for (i, x) in expected.iter().enumerate() {
            assert!((sandwich[(i, i)] - C64::new(*x, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn diagnose_three_qubit_local() {
        let inst = make_instance(&build_family(FamilyKind::Local1D, 3, 0).unwrap(), 1.0, false).unwrap();
        let report = diagnose(&inst, &DiagnoseOptions::default()).unwrap();
        let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "{failed:#?}");
        assert!(report.spectral_radius_qis < report.spectral_radius_gd);
    }
}
