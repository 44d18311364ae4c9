//! Shared helpers for unit tests.

use crate::dense::{CMatrix, C64};
use crate::hermitian::HermitianOperator;

/// Tiny deterministic generator for test fixtures.
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)
    }

    /// Uniform in [-1, 1).
    pub fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64) / ((1u64 << 52) as f64) - 1.0
    }

    pub fn vec(&mut self, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| scale * self.next()).collect()
    }
}

pub fn random_hermitian(rng: &mut Lcg, d: usize, scale: f64) -> HermitianOperator {
    let mut m = CMatrix::zeros(d);
    for i in 0..d {
        m[(i, i)] = C64::new(scale * rng.next(), 0.0);
        for j in (i + 1)..d {
            let v = C64::new(scale * rng.next(), scale * rng.next());
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
    HermitianOperator::new(m).unwrap()
}

/// Random positive semidefinite matrix `A A^H`.
pub fn random_psd(rng: &mut Lcg, d: usize) -> HermitianOperator {
    let a = CMatrix::from_fn(d, |_, _| C64::new(rng.next(), rng.next()));
    HermitianOperator::from_hermitian_part(&a.matmul_adjoint(&a))
}

pub fn pauli_x() -> HermitianOperator {
    let mut m = CMatrix::zeros(2);
    m[(0, 1)] = C64::new(1.0, 0.0);
    m[(1, 0)] = C64::new(1.0, 0.0);
    HermitianOperator::new(m).unwrap()
}

pub fn pauli_z() -> HermitianOperator {
    HermitianOperator::from_real_diagonal(&[1.0, -1.0])
}
