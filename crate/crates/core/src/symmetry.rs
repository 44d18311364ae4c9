//! Block diagonalization by a basis permutation.
//!
//! If a permutation `pi` of the computational basis commutes with every
//! observable, so does every `lambda . F`. The eigenvectors of `pi` are the
//! "momentum" states `|r, k> = p^{-1/2} sum_s w^{-ks} |pi^s r>` with
//! `w = exp(2 pi i / N)`, one per orbit `r` of length `p` and each `k` with
//! `N | k p`, where `N` is the order of `pi`. Grouping them by `k` block
//! diagonalizes the whole family.

use std::f64::consts::PI;

use crate::dense::C64;
use crate::error::{Error, Result};
use crate::gibbs::SparseHermitian;

const NONE: u32 = u32::MAX;

/// Translation by one site on a ring of `n_qubits` (qubit 1 is the most
/// significant bit).
pub fn cyclic_shift(n_qubits: usize) -> Vec<u32> {
    let dim = 1u32 << n_qubits;
    (0..dim).map(|x| (x >> 1) | ((x & 1) << (n_qubits - 1))).collect()
}

/// Global spin flip `X_1 X_2 ... X_n`.
pub fn global_flip(n_qubits: usize) -> Vec<u32> {
    let dim = 1u32 << n_qubits;
    (0..dim).map(|x| x ^ (dim - 1)).collect()
}

pub(crate) fn validate_permutation(perm: &[u32]) -> Result<()> {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        let p = p as usize;
        if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidArgument("not a permutation of the basis".into()));
        }
    }
    Ok(())
}

/// Whether `P^T A P = A`, i.e. `A[pi a, pi b] = A[a, b]` for all entries.
pub fn commutes(perm: &[u32], op: &SparseHermitian) -> bool {
    let entries = op.entries();
    let lookup = |i: u32, j: u32| entries.binary_search_by(|e| (e.0, e.1).cmp(&(i, j))).ok().map(|k| entries[k].2);
    entries.iter().all(|&(i, j, v)| match lookup(perm[i as usize], perm[j as usize]) {
        Some(w) => (w - v).norm() <= 1e-12 * v.norm().max(1.0),
        None => false,
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Momentum basis of a permutation, grouped into blocks of equal `k`.
#[derive(Clone, Debug)]
pub struct BlockBasis {
    dim: usize,
    order: usize,
    orbit: Vec<u32>,
    position: Vec<u32>,
    orbit_len: Vec<u32>,
    /// Non-empty momenta, in increasing order.
    momenta: Vec<usize>,
    /// `column[b][orbit]` is the column of `|orbit, momenta[b]>` inside block `b`.
    column: Vec<Vec<u32>>,
    sizes: Vec<usize>,
}

impl BlockBasis {
    pub fn from_permutation(perm: &[u32]) -> Result<Self> {
        validate_permutation(perm)?;
        let dim = perm.len();
        let mut orbit = vec![NONE; dim];
        let mut position = vec![0u32; dim];
        let mut orbit_len = Vec::new();
        for start in 0..dim {
            if orbit[start] != NONE {
                continue;
            }
            let id = orbit_len.len() as u32;
            let (mut x, mut s) = (start, 0u32);
            while orbit[x] == NONE {
                orbit[x] = id;
                position[x] = s;
                s += 1;
                x = perm[x] as usize;
            }
            orbit_len.push(s);
        }
        let order = orbit_len.iter().fold(1usize, |acc, &p| acc / gcd(acc, p as usize) * p as usize);
        let mut momenta = Vec::new();
        let mut column = Vec::new();
        let mut sizes = Vec::new();
        for k in 0..order {
            let mut cols = vec![NONE; orbit_len.len()];
            let mut size = 0u32;
            for (o, &p) in orbit_len.iter().enumerate() {
                if (k * p as usize) % order == 0 {
                    cols[o] = size;
                    size += 1;
                }
            }
            if size > 0 {
                momenta.push(k);
                column.push(cols);
                sizes.push(size as usize);
            }
        }
        Ok(Self { dim, order, orbit, position, orbit_len, momenta, column, sizes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn phase(&self, k: usize, steps: i64) -> C64 {
        let t = 2.0 * PI * ((k as i64 * steps).rem_euclid(self.order as i64)) as f64 / self.order as f64;
        C64::new(t.cos(), t.sin())
    }

    /// Sparse column `c` of block `b` of the unitary `W`.
    pub fn column(&self, b: usize, c: usize) -> Vec<(u32, C64)> {
        let k = self.momenta[b];
        let o = self.column[b].iter().position(|&col| col == c as u32).expect("column in range");
        let norm = (self.orbit_len[o] as f64).sqrt();
        (0..self.dim)
            .filter(|&x| self.orbit[x] as usize == o)
            .map(|x| (x as u32, self.phase(k, -(self.position[x] as i64)) / norm))
            .collect()
    }

    /// Blocks `W_b^H A W_b` as sparse row-major entry lists. `A` must commute
    /// with the permutation; the discarded off-block part is then zero.
    pub fn project(&self, op: &SparseHermitian) -> Vec<Vec<(u32, u32, C64)>> {
        let mut dense: Vec<Vec<C64>> = self.sizes.iter().map(|&s| vec![C64::new(0.0, 0.0); s * s]).collect();
        for &(a, c, v) in op.entries() {
            let (oa, ob) = (self.orbit[a as usize] as usize, self.orbit[c as usize] as usize);
            let steps = self.position[a as usize] as i64 - self.position[c as usize] as i64;
            let scale = v / (self.orbit_len[oa] as f64 * self.orbit_len[ob] as f64).sqrt();
            for (b, &k) in self.momenta.iter().enumerate() {
                let (i, j) = (self.column[b][oa], self.column[b][ob]);
                if i != NONE && j != NONE {
                    dense[b][i as usize * self.sizes[b] + j as usize] += scale * self.phase(k, steps);
                }
            }
        }
        dense
            .into_iter()
            .zip(&self.sizes)
            .map(|(block, &s)| {
                let cutoff = 1e-15 * block.iter().fold(0.0f64, |m, v| m.max(v.norm()));
                block
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.norm() > cutoff)
                    .map(|(idx, v)| ((idx / s) as u32, (idx % s) as u32, *v))
                    .collect()
            })
            .collect()
    }
}
