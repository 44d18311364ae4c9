//! Cyclic Jacobi eigensolver for complex Hermitian matrices.
//!
//! Slower than the tridiagonal path in [`super::eig_herm`] but entirely
//! self-contained; kept as an independent reference implementation.

use super::{EigenDecomposition, HermitianOperator};
use crate::dense::{CMatrix, C64};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct JacobiOptions {
    /// Stop once the off-diagonal Frobenius norm is below `rel_tol * ||A||_F`.
    pub rel_tol: f64,
    pub max_sweeps: usize,
}

impl Default for JacobiOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-13, max_sweeps: 100 }
    }
}

fn off_diagonal_norm(a: &[C64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j].norm_sqr();
            }
        }
    }
    s.sqrt()
}

pub fn eig_herm_jacobi(h: &HermitianOperator, opts: JacobiOptions) -> Result<EigenDecomposition> {
    let n = h.dim();
    let mut a = h.matrix().as_slice().to_vec();
    let mut u = CMatrix::identity(n).as_slice().to_vec();
    let threshold = opts.rel_tol * h.frobenius_norm();

    let mut sweeps = 0;
    while off_diagonal_norm(&a, n) > threshold {
        if sweeps == opts.max_sweeps {
            return Err(Error::NoConvergence { iterations: sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut u, n, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].re.total_cmp(&a[j * n + j].re));
    let eigenvalues = order.iter().map(|&k| a[k * n + k].re).collect();
    let basis = CMatrix::from_fn(n, |i, k| u[i * n + order[k]]);
    Ok(EigenDecomposition { eigenvalues, basis })
}

/// Annihilates `a[p][q]`: a diagonal phase makes the pivot real, then a real
/// Givens rotation finishes the job. `a <- V^H a V`, `u <- u V`.
fn rotate(a: &mut [C64], u: &mut [C64], n: usize, p: usize, q: usize) {
    let b = a[p * n + q];
    let mag = b.norm();
    if mag == 0.0 {
        return;
    }
    let phase = b / mag;
    let phase_conj = phase.conj();
    for r in 0..n {
        a[r * n + q] *= phase_conj;
        u[r * n + q] *= phase_conj;
    }
    for r in 0..n {
        a[q * n + r] *= phase;
    }

    let app = a[p * n + p].re;
    let aqq = a[q * n + q].re;
    let theta = (aqq - app) / (2.0 * mag);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for r in 0..n {
        let (xp, xq) = (a[r * n + p], a[r * n + q]);
        a[r * n + p] = xp * c - xq * s;
        a[r * n + q] = xp * s + xq * c;
        let (vp, vq) = (u[r * n + p], u[r * n + q]);
        u[r * n + p] = vp * c - vq * s;
        u[r * n + q] = vp * s + vq * c;
    }
    for r in 0..n {
        let (xp, xq) = (a[p * n + r], a[q * n + r]);
        a[p * n + r] = xp * c - xq * s;
        a[q * n + r] = xp * s + xq * c;
    }
    a[p * n + q] = C64::new(0.0, 0.0);
    a[q * n + p] = C64::new(0.0, 0.0);
    a[p * n + p].im = 0.0;
    a[q * n + q].im = 0.0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{pauli_x, random_hermitian, Lcg};

    #[test]
    fn diagonalizes_pauli_x() {
        let eig = eig_herm_jacobi(&pauli_x(), JacobiOptions::default()).unwrap();
        assert!((eig.eigenvalues[0] + 1.0).abs() < 1e-15);
        assert!((eig.eigenvalues[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reconstructs_random_matrices() {
        let mut rng = Lcg::new(1);
        for &d in &[3usize, 8, 20] {
            let a = random_hermitian(&mut rng, d, 1.0);
            let eig = eig_herm_jacobi(&a, JacobiOptions::default()).unwrap();
            let res = eig.reconstruct().sub(&a).frobenius_norm();
            assert!(res <= 1e-10 * a.frobenius_norm().max(1.0));
            let gram = eig.basis.adjoint_matmul(&eig.basis);
            assert!(gram.sub(&CMatrix::identity(d)).frobenius_norm() < 1e-10);
        }
    }

    #[test]
    fn sweep_limit_reports_iterations() {
        let mut rng = Lcg::new(2);
        let a = random_hermitian(&mut rng, 6, 1.0);
        let opts = JacobiOptions { rel_tol: 0.0, max_sweeps: 2 };
        assert_eq!(eig_herm_jacobi(&a, opts).unwrap_err(), Error::NoConvergence { iterations: 2 });
    }
}
