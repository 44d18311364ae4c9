//! Limited-memory BFGS direction via the two-loop recursion.

use std::collections::VecDeque;

use crate::dense::{axpy, dot, norm2};

/// Curvature pairs with `y^T s <= CURVATURE_TOL ||y|| ||s||` are skipped.
pub const CURVATURE_TOL: f64 = 1e-12;

#[inline]
pub fn has_positive_curvature(s: &[f64], y: &[f64]) -> bool {
    dot(y, s) > CURVATURE_TOL * norm2(y) * norm2(s)
}

/// `-H g` where `H` is the L-BFGS inverse-Hessian approximation built from
/// `pairs` (oldest first) on top of `H_0 = h0_scale * I`.
pub fn lbfgs_step(gradient: &[f64], pairs: &[(Vec<f64>, Vec<f64>)], h0_scale: f64) -> Vec<f64> {
    let kept: Vec<&(Vec<f64>, Vec<f64>)> = pairs.iter().filter(|(s, y)| has_positive_curvature(s, y)).collect();
    let mut q = gradient.to_vec();
    let mut alphas = Vec::with_capacity(kept.len());
    for (s, y) in kept.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        axpy(-a, y, &mut q);
        alphas.push((rho, a));
    }
    for v in &mut q {
        *v *= h0_scale;
    }
    for ((s, y), (rho, a)) in kept.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        axpy(a - b, s, &mut q);
    }
    q.iter().map(|v| -v).collect()
}

/// Bounded store of curvature pairs.
#[derive(Clone, Debug, Default)]
pub struct LbfgsHistory {
    capacity: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl LbfgsHistory {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, pairs: VecDeque::new() }
    }

    /// Stores `(s, y)` if it has positive curvature; returns whether it was kept.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        if !has_positive_curvature(&s, &y) {
            return false;
        }
        self.pairs.push_back((s, y));
        while self.pairs.len() > self.capacity {
            self.pairs.pop_front();
        }
        true
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `(y^T s) / (y^T y)` of the newest pair.
    pub fn bb_scale(&self) -> Option<f64> {
        let (s, y) = self.pairs.back()?;
        Some(dot(y, s) / dot(y, y))
    }

    pub fn direction(&self, gradient: &[f64], h0_scale: f64) -> Vec<f64> {
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = self.pairs.iter().cloned().collect();
        lbfgs_step(gradient, &pairs, h0_scale)
    }
}
