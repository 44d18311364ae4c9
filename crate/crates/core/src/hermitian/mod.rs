//! Dense Hermitian linear algebra: eigendecomposition, spectral functional
//! calculus, the Hilbert-Schmidt inner product and the divided-difference
//! (Loewner) kernel of the exponential.

mod jacobi;

pub use jacobi::{eig_herm_jacobi, JacobiOptions};

use crate::dense::{CMatrix, RMatrix, C64};
use crate::error::{Error, Result};

/// Absolute tolerance on `|A - A^H|` entries, scaled by `max(1, max|A_ij|)`.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Largest `|beta * lambda|` accepted before `exp` is considered to overflow.
pub const EXP_ARGUMENT_LIMIT: f64 = 700.0;

/// A complex matrix equal to its conjugate transpose.
///
/// The stored entries are exactly Hermitian: construction validates the
/// input and then symmetrizes away round-off.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    mat: CMatrix,
}

impl HermitianOperator {
    pub fn new(mat: CMatrix) -> Result<Self> {
        let scale = mat.max_abs().max(1.0);
        let asym = mat.max_asymmetry();
        if !(asym <= HERMITIAN_TOL * scale) {
            return Err(Error::NotHermitian { max_asymmetry: asym });
        }
        Ok(Self { mat: mat.hermitian_part() })
    }

    /// Projects onto the Hermitian part without validation. For results of
    /// computations that are Hermitian in exact arithmetic.
    pub fn from_hermitian_part(mat: &CMatrix) -> Self {
        Self { mat: mat.hermitian_part() }
    }

    pub(crate) fn from_trusted(mat: CMatrix) -> Self {
        Self { mat }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { mat: CMatrix::zeros(dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mat: CMatrix::identity(dim) }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        Self { mat: CMatrix::from_real_diagonal(diag) }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    #[inline]
    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn add(&self, rhs: &HermitianOperator) -> Self {
        Self { mat: self.mat.add(&rhs.mat) }
    }

    pub fn sub(&self, rhs: &HermitianOperator) -> Self {
        Self { mat: self.mat.sub(&rhs.mat) }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { mat: self.mat.scaled(alpha) }
    }

    pub fn add_scaled(&mut self, rhs: &HermitianOperator, alpha: f64) {
        self.mat.add_scaled(&rhs.mat, alpha);
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.frobenius_norm()
    }

    /// Spectral norm, i.e. the largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> Result<f64> {
        let eig = eig_herm(self)?;
        Ok(eig.eigenvalues.iter().fold(0.0, |m, v| m.max(v.abs())))
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(eig_herm(self)?.eigenvalues[0])
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(*eig_herm(self)?.eigenvalues.last().expect("non-empty operator"))
    }
}

/// `H = U diag(eigenvalues) U^H` with eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors.
    pub basis: CMatrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U diag(values) U^H`.
    pub fn compose(&self, values: &[f64]) -> HermitianOperator {
        let d = self.dim();
        let mut scaled = self.basis.clone();
        for i in 0..d {
            for (k, v) in values.iter().enumerate() {
                scaled[(i, k)] *= *v;
            }
        }
        HermitianOperator::from_hermitian_part(&scaled.matmul_adjoint(&self.basis))
    }

    pub fn reconstruct(&self) -> HermitianOperator {
        self.compose(&self.eigenvalues)
    }

    /// `U^H A U`: the matrix of `A` in this eigenbasis.
    pub fn to_eigenbasis(&self, a: &CMatrix) -> CMatrix {
        self.basis.adjoint_matmul(&a.matmul(&self.basis))
    }

    /// `U A U^H`: back from the eigenbasis.
    pub fn from_eigenbasis(&self, a: &CMatrix) -> CMatrix {
        self.basis.matmul(a).matmul_adjoint(&self.basis)
    }
}

/// Eigendecomposition of a Hermitian operator (Householder tridiagonalization
/// and implicit QR as implemented by `faer`).
pub fn eig_herm(a: &HermitianOperator) -> Result<EigenDecomposition> {
    use faer::dyn_stack::{MemBuffer, MemStack};
    use faer::linalg::evd::{self, ComputeEigenvectors, SelfAdjointEvdParams};
    use faer::{Auto, Mat, MatRef, Par};

    let dim = a.dim();
    if dim == 0 {
        return Ok(EigenDecomposition { eigenvalues: Vec::new(), basis: CMatrix::zeros(0) });
    }
    // The row-major buffer read column-major is conj(A), which has the same
    // spectrum and conjugated eigenvectors.
    let conj_a = MatRef::from_column_major_slice(a.matrix().as_slice(), dim, dim);
    let params: SelfAdjointEvdParams = Auto::<C64>::auto();
    let mut buf = MemBuffer::new(evd::self_adjoint_evd_scratch::<C64>(dim, ComputeEigenvectors::Yes, Par::Seq, params.into()));
    let mut s = faer::diag::Diag::<C64>::zeros(dim);
    let mut u = Mat::<C64>::zeros(dim, dim);
    evd::self_adjoint_evd(conj_a, s.as_mut(), Some(u.as_mut()), Par::Seq, MemStack::new(&mut buf), params.into())
        .map_err(|_| Error::NoConvergence { iterations: 0 })?;
    let s = s.column_vector();
    let eigenvalues: Vec<f64> = (0..dim).map(|i| s[i].re).collect();
    let basis = CMatrix::from_fn(dim, |i, k| u[(i, k)].conj());
    Ok(EigenDecomposition { eigenvalues, basis })
}

/// Checked variant of [`eig_herm`] taking a raw matrix.
pub fn eig_herm_matrix(a: &CMatrix) -> Result<EigenDecomposition> {
    eig_herm(&HermitianOperator::new(a.clone())?)
}

/// Spectral functional calculus `f(A) = sum_k f(lambda_k) P_k`.
///
/// Fails with [`Error::Domain`] if `f` is not finite at some eigenvalue.
pub fn mat_fn(a: &HermitianOperator, f: impl Fn(f64) -> f64) -> Result<HermitianOperator> {
    let eig = eig_herm(a)?;
    mat_fn_eig(&eig, f)
}

pub fn mat_fn_eig(eig: &EigenDecomposition, f: impl Fn(f64) -> f64) -> Result<HermitianOperator> {
    let values = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            let v = f(l);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Domain { eigenvalue: l })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(eig.compose(&values))
}

pub fn expm(a: &HermitianOperator) -> Result<HermitianOperator> {
    let eig = eig_herm(a)?;
    if let Some(&l) = eig.eigenvalues.iter().find(|l| l.abs() > EXP_ARGUMENT_LIMIT) {
        return Err(Error::Overflow { argument: l });
    }
    mat_fn_eig(&eig, f64::exp)
}

/// Matrix logarithm; requires a positive definite argument.
pub fn logm(a: &HermitianOperator) -> Result<HermitianOperator> {
    let eig = eig_herm(a)?;
    if let Some(&l) = eig.eigenvalues.iter().find(|&&l| l <= 0.0) {
        return Err(Error::Domain { eigenvalue: l });
    }
    mat_fn_eig(&eig, f64::ln)
}

/// Hilbert-Schmidt inner product `tr(A^H B)`, real for Hermitian inputs.
pub fn hs_inner(a: &HermitianOperator, b: &HermitianOperator) -> Result<f64> {
    hs_inner_matrix(a.matrix(), b.matrix())
}

pub fn hs_inner_matrix(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let z: C64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x.conj() * y).sum();
    let scale = (a.frobenius_norm() * b.frobenius_norm()).max(1.0);
    if z.im.abs() > 1e-12 * scale {
        return Err(Error::NotReal { imag: z.im });
    }
    Ok(z.re)
}

/// Whether `a` and `b` are close enough for the divided difference to use its
/// confluent limit.
#[inline]
pub(crate) fn is_degenerate(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * 1f64.max(a.abs()).max(b.abs())
}

/// Divided difference of `x -> exp(beta x)` at `a` and `b`.
#[inline]
pub(crate) fn exp_divided_difference(a: f64, b: f64, beta: f64) -> f64 {
    if is_degenerate(a, b) {
        beta * (beta * a).exp()
    } else {
        // e^{beta b} (e^{beta (a-b)} - 1) / (a - b), accurate for close a, b.
        (beta * b).exp() * (beta * (a - b)).exp_m1() / (a - b)
    }
}

/// Loewner matrix `K_ab = (e^{beta l_a} - e^{beta l_b}) / (l_a - l_b)`, with
/// `beta e^{beta l_a}` on (near-)degenerate pairs.
///
/// With `H = U diag(l) U^H`, the derivative of `exp(beta H)` along `V` is
/// `U (K o U^H V U) U^H`.
pub fn exp_divided_difference_kernel(eigenvalues: &[f64], beta: f64) -> Result<RMatrix> {
    if let Some(&l) = eigenvalues.iter().find(|l| (beta * **l).abs() > EXP_ARGUMENT_LIMIT) {
        return Err(Error::Overflow { argument: beta * l });
    }
    let d = eigenvalues.len();
    let mut k = RMatrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let v = exp_divided_difference(eigenvalues[a], eigenvalues[b], beta);
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    Ok(k)
}

/// Directional derivative `d/ds exp(beta (H + s V))` at `s = 0`.
pub fn exp_derivative(eig: &EigenDecomposition, v: &HermitianOperator, beta: f64) -> Result<HermitianOperator> {
    let kernel = exp_divided_difference_kernel(&eig.eigenvalues, beta)?;
    let v_eig = eig.to_eigenbasis(v.matrix());
    Ok(HermitianOperator::from_hermitian_part(&eig.from_eigenbasis(&v_eig.hadamard_real(&kernel))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{pauli_x, pauli_z, random_hermitian, Lcg};

    fn taylor_exp(a: &CMatrix, terms: usize) -> CMatrix {
        let mut out = CMatrix::identity(a.dim());
        let mut term = CMatrix::identity(a.dim());
        for k in 1..terms {
            term = term.matmul(a).scaled(1.0 / k as f64);
            out = out.add(&term);
        }
        out
    }

    #[test]
    fn pauli_spectra() {
        let z = eig_herm(&pauli_z()).unwrap();
        assert_eq!(z.eigenvalues, vec![-1.0, 1.0]);

        let x = eig_herm(&pauli_x()).unwrap();
        assert!((x.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((x.eigenvalues[1] - 1.0).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // eigenvector of -1 is (|0> - |1>)/sqrt 2 up to phase
        let v0 = (x.basis[(0, 0)], x.basis[(1, 0)]);
        assert!((v0.0.norm() - s).abs() < 1e-14 && (v0.1.norm() - s).abs() < 1e-14);
        assert!(((v0.0 + v0.1).norm()) < 1e-14);
        let v1 = (x.basis[(0, 1)], x.basis[(1, 1)]);
        assert!(((v1.0 - v1.1).norm()) < 1e-14);
    }

    #[test]
    fn reconstruction_and_unitarity() {
        let mut rng = Lcg::new(7);
        for &d in &[1usize, 2, 5, 8, 16] {
            let a = random_hermitian(&mut rng, d, 3.0);
            let eig = eig_herm(&a).unwrap();
            assert!(eig.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            let res = eig.reconstruct().sub(&a).frobenius_norm();
            assert!(res <= 1e-10 * a.frobenius_norm().max(1.0), "d={d} residual {res}");
            let gram = eig.basis.adjoint_matmul(&eig.basis);
            assert!(gram.sub(&CMatrix::identity(d)).frobenius_norm() < 1e-10);
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = CMatrix::zeros(2);
        m[(0, 1)] = C64::new(1.0, 0.0);
        match HermitianOperator::new(m) {
            Err(Error::NotHermitian { max_asymmetry }) => assert_eq!(max_asymmetry, 1.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exp_examples() {
        let e = expm(&HermitianOperator::zeros(3)).unwrap();
        assert!(e.matrix().sub(&CMatrix::identity(3)).max_abs() < 1e-15);

        let e = expm(&pauli_z().scaled(2f64.ln())).unwrap();
        assert!((e.matrix()[(0, 0)].re - 2.0).abs() < 1e-14);
        assert!((e.matrix()[(1, 1)].re - 0.5).abs() < 1e-14);

        // exp(sigma_x) = cosh(1) I + sinh(1) sigma_x; Taylor oracle.
        let x = pauli_x();
        let e = expm(&x).unwrap();
        let oracle = taylor_exp(x.matrix(), 30);
        assert!(e.matrix().sub(&oracle).max_abs() <= 1e-12);
        assert!((oracle[(0, 0)].re - 1f64.cosh()).abs() < 1e-14);
        assert!((oracle[(0, 1)].re - 1f64.sinh()).abs() < 1e-14);
    }

    #[test]
    fn log_domain_error_names_eigenvalue() {
        match logm(&pauli_z()) {
            Err(Error::Domain { eigenvalue }) => assert_eq!(eigenvalue, -1.0),
            other => panic!("unexpected {other:?}"),
        }
        match mat_fn(&HermitianOperator::from_real_diagonal(&[0.0, 2.0]), f64::ln) {
            Err(Error::Domain { eigenvalue }) => assert_eq!(eigenvalue, 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = Lcg::new(11);
        for _ in 0..5 {
            let a = random_hermitian(&mut rng, 6, 1.0);
            let norm = a.spectral_norm().unwrap();
            let a = a.scaled(4.5 / norm);
            let back = logm(&expm(&a).unwrap()).unwrap();
            assert!(back.sub(&a).frobenius_norm() <= 1e-9);
        }
    }

    #[test]
    fn inner_products() {
        let i2 = HermitianOperator::identity(2);
        assert_eq!(hs_inner(&i2, &i2).unwrap(), 2.0);
        assert_eq!(hs_inner(&pauli_x(), &pauli_z()).unwrap(), 0.0);
        let rho = HermitianOperator::from_real_diagonal(&[0.75, 0.25]);
        assert!((hs_inner(&pauli_z(), &rho).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            hs_inner(&i2, &HermitianOperator::identity(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kernel_examples() {
        let k = exp_divided_difference_kernel(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!(k[(0, 1)], 1.0);
        let k = exp_divided_difference_kernel(&[0.0, 2f64.ln()], 1.0).unwrap();
        assert!((k[(0, 1)] - 1.0 / 2f64.ln()).abs() < 1e-14);
        assert!((k[(0, 1)] - 1.442695).abs() < 1e-6);
        assert!(matches!(
            exp_divided_difference_kernel(&[0.0, 800.0], 1.0),
            Err(Error::Overflow { .. })
        ));
    }

    fn exp_beta(h: &HermitianOperator, beta: f64) -> CMatrix {
        expm(&h.scaled(beta)).unwrap().into_matrix()
    }

    #[test]
    fn kernel_matches_finite_difference() {
        let mut rng = Lcg::new(3);
        for &beta in &[0.5, 1.0, 2.0] {
            let h = random_hermitian(&mut rng, 8, 1.0);
            let v = random_hermitian(&mut rng, 8, 1.0);
            let eig = eig_herm(&h).unwrap();
            let deriv = exp_derivative(&eig, &v, beta).unwrap();
            let step = 1e-5;
            let fd = exp_beta(&h.add(&v.scaled(step)), beta)
                .sub(&exp_beta(&h.sub(&v.scaled(step)), beta))
                .scaled(0.5 / step);
            let rel = deriv.matrix().sub(&fd).frobenius_norm() / fd.frobenius_norm();
            assert!(rel <= 1e-6, "beta={beta} rel={rel}");
        }
    }

    /// Gauss-Legendre nodes/weights on [0, 1] via Newton iteration on P_n.
    fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            out.push((0.5 * (x + 1.0), 0.5 * w));
        }
        out
    }

    #[test]
    fn kernel_matches_duhamel_quadrature() {
        let mut rng = Lcg::new(5);
        let beta = 1.0;
        for _ in 0..3 {
            let h = random_hermitian(&mut rng, 8, 1.0);
            let v = random_hermitian(&mut rng, 8, 1.0);
            let eig = eig_herm(&h).unwrap();
            let deriv = exp_derivative(&eig, &v, beta).unwrap();
            // beta * int_0^1 e^{t beta H} V e^{(1-t) beta H} dt
            let mut integral = CMatrix::zeros(8);
            for (t, w) in gauss_legendre(64) {
                let left = exp_beta(&h, t * beta);
                let right = exp_beta(&h, (1.0 - t) * beta);
                integral.add_scaled(&left.matmul(v.matrix()).matmul(&right), w * beta);
            }
            let rel = deriv.matrix().sub(&integral).frobenius_norm() / integral.frobenius_norm();
            assert!(rel <= 1e-6, "rel={rel}");
        }
    }

    #[test]
    fn kernel_is_symmetric_and_positive() {
        let mut rng = Lcg::new(9);
        let h = random_hermitian(&mut rng, 10, 2.0);
        let eig = eig_herm(&h).unwrap();
        let k = exp_divided_difference_kernel(&eig.eigenvalues, 1.3).unwrap();
        assert_eq!(k.max_asymmetry(), 0.0);
        assert!(k.min_entry() > 0.0);
    }

    #[test]
    fn faer_and_jacobi_agree() {
        let mut rng = Lcg::new(21);
        let a = random_hermitian(&mut rng, 12, 2.0);
        let fast = eig_herm(&a).unwrap();
        let slow = eig_herm_jacobi(&a, JacobiOptions::default()).unwrap();
        for (x, y) in fast.eigenvalues.iter().zip(&slow.eigenvalues) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
