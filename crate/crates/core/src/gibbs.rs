//! Quantities evaluated at a dual point `lambda`: partition function, Gibbs
//! state, moments, dual objective and gradient, and the Hessian bundle.
//!
//! Everything hangs off one eigendecomposition of `lambda . F`, computed with
//! the largest eigenvalue shifted out so that `Z` never has to be formed
//! explicitly.

use crate::dense::{dot, CMatrix, RMatrix, C64};
use crate::error::{Error, Result};
use crate::hermitian::{eig_herm, exp_divided_difference_kernel, is_degenerate, logm, EigenDecomposition, HermitianOperator};
use crate::model::ObservableFamily;
use crate::symmetry::BlockBasis;

/// Nonzero entries of a Hermitian operator, for cheap `lambda . F` assembly
/// and moment evaluation.
#[derive(Clone, Debug)]
pub struct SparseHermitian {
    dim: usize,
    entries: Vec<(u32, u32, C64)>,
}

impl SparseHermitian {
    pub fn from_operator(op: &HermitianOperator) -> Self {
        let m = op.matrix();
        let dim = m.dim();
        let mut entries = Vec::new();
        for i in 0..dim {
            for (j, v) in m.row(i).iter().enumerate() {
                if *v != C64::new(0.0, 0.0) {
                    entries.push((i as u32, j as u32, *v));
                }
            }
        }
        Self { dim, entries }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// `(row, column, value)` in row-major order.
    pub fn entries(&self) -> &[(u32, u32, C64)] {
        &self.entries
    }

    /// `target += alpha * self`
    pub fn accumulate_into(&self, target: &mut CMatrix, alpha: f64) {
        debug_assert_eq!(target.dim(), self.dim);
        let n = self.dim;
        let data = target.as_mut_slice();
        for &(i, j, v) in &self.entries {
            data[i as usize * n + j as usize] += v * alpha;
        }
    }

    /// `Re tr(self^H rho)`.
    pub fn inner(&self, rho: &CMatrix) -> f64 {
        let n = self.dim;
        let data = rho.as_slice();
        self.entries
            .iter()
            .map(|&(i, j, v)| {
                let r = data[i as usize * n + j as usize];
                v.re * r.re + v.im * r.im
            })
            .sum()
    }
}

/// The Gibbs state `xi = exp(H) / tr exp(H)` of `H = ln sigma0 + lambda . F`
/// together with its spectral data and moments `<F_j, xi>`.
#[derive(Clone, Debug)]
pub struct GibbsSnapshot {
    pub lambda: Vec<f64>,
    pub hamiltonian: HermitianOperator,
    pub eig: EigenDecomposition,
    /// Boltzmann weights `e^{h_k} / Z` in the eigenbasis.
    pub weights: Vec<f64>,
    pub log_z: f64,
    pub state: HermitianOperator,
    pub moments: Vec<f64>,
}

impl GibbsSnapshot {
    pub fn z(&self) -> f64 {
        self.log_z.exp()
    }
}

/// The first-order data the solvers need at a dual point.
pub trait MomentData {
    fn lambda(&self) -> &[f64];
    /// `ln tr exp(lambda . F)`
    fn log_z(&self) -> f64;
    /// `<F_j, xi>`
    fn moments(&self) -> &[f64];
}

impl MomentData for GibbsSnapshot {
    fn lambda(&self) -> &[f64] {
        &self.lambda
    }
    fn log_z(&self) -> f64 {
        self.log_z
    }
    fn moments(&self) -> &[f64] {
        &self.moments
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualEvaluation {
    pub lambda: Vec<f64>,
    pub log_z: f64,
    pub moments: Vec<f64>,
}

impl MomentData for DualEvaluation {
    fn lambda(&self) -> &[f64] {
        &self.lambda
    }
    fn log_z(&self) -> f64 {
        self.log_z
    }
    fn moments(&self) -> &[f64] {
        &self.moments
    }
}

struct BlockedFamily {
    sizes: Vec<usize>,
    /// `ops[j][b]`: observable `j` restricted to block `b`.
    ops: Vec<Vec<Vec<(u32, u32, C64)>>>,
}

/// Union sparsity pattern of a family; `ops[j]` indexes into `pattern`.
struct PatternFamily {
    pattern: Vec<(u32, u32)>,
    /// Index of the transposed entry, which the pattern always contains.
    mirror: Vec<u32>,
    ops: Vec<Vec<(u32, C64)>>,
}

impl PatternFamily {
    /// `None` when the pattern is too dense for entrywise evaluation of the
    /// state to beat a full matrix product.
    fn new(obs: &ObservableFamily) -> Option<Self> {
        let mut pattern: Vec<(u32, u32)> = obs.sparse().iter().flat_map(|f| f.entries().iter().map(|e| (e.0, e.1))).collect();
        pattern.sort_unstable();
        pattern.dedup();
        let d = obs.dim();
        if pattern.len() * 4 > d * d {
            return None;
        }
        let find = |i: u32, j: u32| pattern.binary_search(&(i, j)).expect("pattern is symmetric") as u32;
        let mirror = pattern.iter().map(|&(i, j)| find(j, i)).collect();
        let ops = obs.sparse().iter().map(|f| f.entries().iter().map(|&(i, j, v)| (find(i, j), v)).collect()).collect();
        Some(Self { pattern, mirror, ops })
    }
}

/// Repeated evaluation of `ln Z` and the moments for one family.
///
/// When the family carries a basis symmetry, each evaluation diagonalizes
/// the symmetry blocks separately. Otherwise the state is only formed on the
/// sparsity pattern of the observables, or in full via [`snapshot`] when that
/// pattern is dense.
pub struct GibbsOracle<'a> {
    obs: &'a ObservableFamily,
    blocked: Option<BlockedFamily>,
    pattern: Option<PatternFamily>,
}

impl<'a> GibbsOracle<'a> {
    pub fn new(obs: &'a ObservableFamily) -> Result<Self> {
        let blocked = match obs.symmetry() {
            Some(perm) => {
                let basis = BlockBasis::from_permutation(perm)?;
                let ops = obs.sparse().iter().map(|f| basis.project(f)).collect();
                Some(BlockedFamily { sizes: basis.block_sizes().to_vec(), ops })
            }
            None => None,
        };
        let pattern = if blocked.is_none() { PatternFamily::new(obs) } else { None };
        Ok(Self { obs, blocked, pattern })
    }

    /// Sizes of the diagonalized blocks.
    pub fn block_sizes(&self) -> Vec<usize> {
        match &self.blocked {
            Some(b) => b.sizes.clone(),
            None => vec![self.obs.dim()],
        }
    }

    pub fn evaluate(&self, lambda: &[f64]) -> Result<DualEvaluation> {
        match (&self.blocked, &self.pattern) {
            (Some(blocked), _) => self.evaluate_blocked(blocked, lambda),
            (None, Some(pattern)) => self.evaluate_pattern(pattern, lambda),
            (None, None) => {
                let snap = snapshot(lambda, self.obs, None)?;
                Ok(DualEvaluation { lambda: snap.lambda, log_z: snap.log_z, moments: snap.moments })
            }
        }
    }

    fn evaluate_pattern(&self, family: &PatternFamily, lambda: &[f64]) -> Result<DualEvaluation> {
        check_lambda(lambda, self.obs)?;
        let eig = eig_herm(&self.obs.combine(lambda))?;
        let shift = *eig.eigenvalues.last().expect("non-empty spectrum");
        let mut roots: Vec<f64> = eig.eigenvalues.iter().map(|h| (0.5 * (h - shift)).exp()).collect();
        let total: f64 = roots.iter().map(|r| r * r).sum();
        let norm = total.sqrt();
        for r in &mut roots {
            *r /= norm;
        }
        // xi = V V^H with V = U diag(sqrt(w))
        let mut v = eig.basis;
        let d = v.dim();
        for row in v.as_mut_slice().chunks_exact_mut(d) {
            for (x, r) in row.iter_mut().zip(&roots) {
                *x *= *r;
            }
        }
        let rows = v.as_slice();
        let mut state = vec![C64::new(0.0, 0.0); family.pattern.len()];
        for (k, &(i, j)) in family.pattern.iter().enumerate() {
            if i <= j {
                let (a, b) = (&rows[i as usize * d..][..d], &rows[j as usize * d..][..d]);
                let value = a.iter().zip(b).fold(C64::new(0.0, 0.0), |acc, (x, y)| acc + x * y.conj());
                state[k] = value;
                state[family.mirror[k] as usize] = value.conj();
            }
        }
        let moments = family
            .ops
            .iter()
            .map(|f| {
                f.iter()
                    .map(|&(k, v)| {
                        let r = state[k as usize];
                        v.re * r.re + v.im * r.im
                    })
                    .sum()
            })
            .collect();
        Ok(DualEvaluation { lambda: lambda.to_vec(), log_z: shift + total.ln(), moments })
    }

    fn evaluate_blocked(&self, blocked: &BlockedFamily, lambda: &[f64]) -> Result<DualEvaluation> {
        check_lambda(lambda, self.obs)?;
        let mut eigs = Vec::with_capacity(blocked.sizes.len());
        for (b, &size) in blocked.sizes.iter().enumerate() {
            let mut h = CMatrix::zeros(size);
            let data = h.as_mut_slice();
            for (f, &l) in blocked.ops.iter().zip(lambda) {
                for &(i, j, v) in &f[b] {
                    data[i as usize * size + j as usize] += v * l;
                }
            }
            eigs.push(eig_herm(&HermitianOperator::from_trusted(h))?);
        }
        let shift = eigs.iter().filter_map(|e| e.eigenvalues.last()).fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let weights: Vec<Vec<f64>> = eigs.iter().map(|e| e.eigenvalues.iter().map(|h| (h - shift).exp()).collect()).collect();
        let total: f64 = weights.iter().flatten().sum();
        let mut moments = vec![0.0; lambda.len()];
        for (b, (eig, w)) in eigs.iter().zip(&weights).enumerate() {
            let w: Vec<f64> = w.iter().map(|x| x / total).collect();
            let rho = eig.compose(&w);
            let (size, data) = (blocked.sizes[b], rho.matrix().as_slice());
            for (m, f) in moments.iter_mut().zip(&blocked.ops) {
                *m += f[b]
                    .iter()
                    .map(|&(i, j, v)| {
                        let r = data[i as usize * size + j as usize];
                        v.re * r.re + v.im * r.im
                    })
                    .sum::<f64>();
            }
        }
        Ok(DualEvaluation { lambda: lambda.to_vec(), log_z: shift + total.ln(), moments })
    }
}

fn check_lambda(lambda: &[f64], obs: &ObservableFamily) -> Result<()> {
    if lambda.len() != obs.len() {
        return Err(Error::DimensionMismatch { expected: obs.len(), found: lambda.len() });
    }
    if let Some(bad) = lambda.iter().find(|l| !l.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite parameter {bad}")));
    }
    Ok(())
}

/// Evaluates the Gibbs state at `lambda`. `sigma0` defaults to `I/d`, which
/// only shifts `ln Z` by `-ln d` and is therefore omitted from the exponent.
pub fn snapshot(lambda: &[f64], obs: &ObservableFamily, sigma0: Option<&HermitianOperator>) -> Result<GibbsSnapshot> {
    check_lambda(lambda, obs)?;
    let mut hamiltonian = obs.combine(lambda);
    if let Some(s0) = sigma0 {
        if s0.dim() != obs.dim() {
            return Err(Error::DimensionMismatch { expected: obs.dim(), found: s0.dim() });
        }
        hamiltonian = hamiltonian.add(&logm(s0)?);
    }
    let eig = eig_herm(&hamiltonian)?;
    let shift = *eig.eigenvalues.last().expect("non-empty spectrum");
    let mut weights: Vec<f64> = eig.eigenvalues.iter().map(|h| (h - shift).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let log_z = shift + total.ln();
    let state = eig.compose(&weights);
    let moments = obs.sparse().iter().map(|f| f.inner(state.matrix())).collect();
    Ok(GibbsSnapshot { lambda: lambda.to_vec(), hamiltonian, eig, weights, log_z, state, moments })
}

/// `ln tr exp(lambda . F) - lambda . alpha`.
pub fn dual_objective(snap: &impl MomentData, alpha: &[f64]) -> f64 {
    snap.log_z() - dot(snap.lambda(), alpha)
}

/// `<F_j, xi> - alpha_j`.
pub fn dual_gradient(snap: &impl MomentData, alpha: &[f64]) -> Vec<f64> {
    snap.moments().iter().zip(alpha).map(|(m, a)| m - a).collect()
}

/// Second-order information at a snapshot.
///
/// `lambda_hess` is the Hessian of `Z = tr exp(lambda . F)` and `l` the
/// Hessian of `ln Z`; they are related by `lambda_hess = Z (l + q)`.
#[derive(Clone, Debug)]
pub struct HessianBundle {
    pub l: RMatrix,
    pub lambda_hess: RMatrix,
    /// `diag(<F_j, exp(lambda . F)>)`
    pub delta: RMatrix,
    /// `diag(<F_j, xi>)`
    pub p: RMatrix,
    /// Outer product of the moment vector.
    pub q: RMatrix,
    pub z: f64,
    pub moments: Vec<f64>,
}

/// Normalized Loewner kernel `(w_a - w_b) / (h_a - h_b)` of the Boltzmann
/// weights, i.e. the divided-difference kernel of `exp` divided by `Z`.
fn normalized_kernel(snap: &GibbsSnapshot) -> RMatrix {
    let h = &snap.eig.eigenvalues;
    let w = &snap.weights;
    let d = h.len();
    let mut k = RMatrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let v = if is_degenerate(h[a], h[b]) {
                0.5 * (w[a] + w[b])
            } else {
                w[b] * (h[a] - h[b]).exp_m1() / (h[a] - h[b])
            };
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    k
}

/// Second-order data at `snap`. `lambda_hess` and `delta` are contracted
/// against the unnormalized divided-difference kernel of `exp`, separately
/// from `l`, so the identity `lambda_hess = Z (l + q)` is a genuine check.
pub fn hessian(snap: &GibbsSnapshot, obs: &ObservableFamily) -> Result<HessianBundle> {
    let m = obs.len();
    if snap.lambda.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: snap.lambda.len() });
    }
    let kernel = normalized_kernel(snap);
    let raw_kernel = exp_divided_difference_kernel(&snap.eig.eigenvalues, 1.0)?;
    let rotated: Vec<CMatrix> = obs.operators().iter().map(|f| snap.eig.to_eigenbasis(f.matrix())).collect();
    let contract = |kernel: &RMatrix| {
        let weighted: Vec<CMatrix> = rotated.iter().map(|f| f.hadamard_real(kernel)).collect();
        // sum_ab conj(F~_j[a,b]) K_ab F~_k[a,b]
        let mut out = RMatrix::zeros(m, m);
        for j in 0..m {
            for k in j..m {
                let v: f64 = rotated[j]
                    .as_slice()
                    .iter()
                    .zip(weighted[k].as_slice())
                    .map(|(x, y)| x.re * y.re + x.im * y.im)
                    .sum();
                out[(j, k)] = v;
                out[(k, j)] = v;
            }
        }
        out
    };
    let moments = snap.moments.clone();
    let q = RMatrix::from_fn(m, m, |i, j| moments[i] * moments[j]);
    let l = contract(&kernel).sub(&q);
    let lambda_hess = contract(&raw_kernel);
    let exp_h: Vec<f64> = snap.eig.eigenvalues.iter().map(|h| h.exp()).collect();
    let delta_diag: Vec<f64> = rotated
        .iter()
        .map(|f| exp_h.iter().enumerate().map(|(a, e)| e * f[(a, a)].re).sum())
        .collect();
    let delta = RMatrix::from_diagonal(&delta_diag);
    let p = RMatrix::from_diagonal(&moments);
    Ok(HessianBundle { l, lambda_hess, delta, p, q, z: snap.z(), moments })
}

/// Bregman (Umegaki) divergence `tr(X ln X - X ln Y - X + Y)` for possibly
/// unnormalized `X >= 0` and `Y > 0` on the support of `X`.
pub fn kl_divergence(x: &HermitianOperator, y: &HermitianOperator) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), found: y.dim() });
    }
    const ZERO: f64 = 1e-12;
    let ex = eig_herm(x)?;
    if let Some(&v) = ex.eigenvalues.iter().find(|&&v| v < -ZERO) {
        return Err(Error::Domain { eigenvalue: v });
    }
    let x_log_x: f64 = ex.eigenvalues.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum();

    // tr(X ln Y) = sum_k ln(y_k) <v_k|X|v_k>
    let ey = eig_herm(y)?;
    let x_in_y = ey.to_eigenbasis(x.matrix());
    let scale = x.trace().abs().max(1.0);
    let mut x_log_y = 0.0;
    for (k, &yk) in ey.eigenvalues.iter().enumerate() {
        let weight = x_in_y[(k, k)].re;
        if yk <= 0.0 {
            if weight > ZERO * scale {
                return Err(Error::Support { eigenvalue: yk });
            }
            continue;
        }
        x_log_y += weight * yk.ln();
    }
    Ok(x_log_x - x_log_y - x.trace() + y.trace())
}
