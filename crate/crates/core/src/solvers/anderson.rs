//! Anderson mixing for the QIS fixed-point map and the Barzilai-Borwein
//! choice of the mixing parameter.

use std::collections::VecDeque;

use crate::dense::{dot, sub, RMatrix};
use crate::error::Result;

/// `x + G r` with `G = beta I - (X + beta R) (R^T R)^+ R^T`, where the columns
/// of `X` and `R` are the most recent iterate and residual differences. The
/// pseudo-inverse drops singular values below `rcond * sigma_max`.
///
/// With no history this is the damped fixed-point step `x + beta r`.
pub fn anderson_update(dx: &[Vec<f64>], dr: &[Vec<f64>], x: &[f64], r: &[f64], beta: f64, rcond: f64) -> Result<Vec<f64>> {
    debug_assert_eq!(dx.len(), dr.len());
    let mut next: Vec<f64> = x.iter().zip(r).map(|(xi, ri)| xi + beta * ri).collect();
    if dr.is_empty() {
        return Ok(next);
    }
    let rmat = RMatrix::from_columns(dr);
    let gram = rmat.transpose().matmul(&rmat);
    let gamma = gram.pseudo_inverse(rcond)?.matvec(&rmat.tr_matvec(r));
    for (k, g) in gamma.iter().enumerate() {
        for (i, n) in next.iter_mut().enumerate() {
            *n -= (dx[k][i] + beta * dr[k][i]) * g;
        }
    }
    Ok(next)
}

/// `beta = -(dr^T dx) / (dr^T dr)`, the minimizer of `||dx + beta dr||_2`.
/// Falls back to 1 when `dr` vanishes.
pub fn bb_mixing(delta_x_prev: &[f64], delta_r_prev: &[f64]) -> f64 {
    let denom = dot(delta_r_prev, delta_r_prev);
    if denom.sqrt() <= 1e-300 {
        return 1.0;
    }
    -dot(delta_r_prev, delta_x_prev) / denom
}

/// Sliding window of iterate/residual differences.
#[derive(Clone, Debug, Default)]
pub struct AndersonHistory {
    capacity: usize,
    dx: VecDeque<Vec<f64>>,
    dr: VecDeque<Vec<f64>>,
    last: Option<(Vec<f64>, Vec<f64>)>,
}

impl AndersonHistory {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, ..Self::default() }
    }

    /// Records `(x_t, r_t)` and pushes the differences to the previous pair.
    pub fn observe(&mut self, x: &[f64], r: &[f64]) {
        if let Some((px, pr)) = self.last.take() {
            self.dx.push_back(sub(x, &px));
            self.dr.push_back(sub(r, &pr));
            while self.dx.len() > self.capacity {
                self.dx.pop_front();
                self.dr.pop_front();
            }
        }
        self.last = Some((x.to_vec(), r.to_vec()));
    }

    /// Drops the difference window, keeping the current point as anchor.
    pub fn reset(&mut self) {
        self.dx.clear();
        self.dr.clear();
    }

    pub fn len(&self) -> usize {
        self.dx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dx.is_empty()
    }

    pub fn latest(&self) -> Option<(&[f64], &[f64])> {
        Some((self.dx.back()?.as_slice(), self.dr.back()?.as_slice()))
    }

    pub fn step(&self, x: &[f64], r: &[f64], beta: f64, rcond: f64) -> Result<Vec<f64>> {
        let dx: Vec<Vec<f64>> = self.dx.iter().cloned().collect();
        let dr: Vec<Vec<f64>> = self.dr.iter().cloned().collect();
        anderson_update(&dx, &dr, x, r, beta, rcond)
    }
}
