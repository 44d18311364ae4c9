//! Quantum maximum-entropy inference.
//!
//! Given target moments `alpha_j = <F_j, rho>` of observables with
//! `F_j >= 0` and `sum_j F_j <= I`, find the Gibbs state
//! `exp(lambda . F) / Z` reproducing them. The crate provides the dense
//! linear algebra, the benchmark Hamiltonian families, the Gibbs oracle,
//! Quantum Iterative Scaling, dual gradient descent, their Anderson and
//! L-BFGS accelerations, and the diagnostics that check the convergence
//! theory numerically.

pub mod analysis;
pub mod dense;
pub mod error;
pub mod gibbs;
pub mod hermitian;
pub mod model;
pub mod rng;
pub mod solvers;
pub mod symmetry;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
