//! Pauli-string Hamiltonians, the benchmark families, normalization into
//! observables and synthetic problem instances.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dense::{dot, CMatrix, C64};
use crate::error::{Error, Result};
use crate::gibbs::{snapshot, SparseHermitian};
use crate::hermitian::{HermitianOperator, EXP_ARGUMENT_LIMIT};
use crate::rng::NormalStream;
use crate::symmetry::{commutes, cyclic_shift, global_flip, validate_permutation};

/// Dense realizations are refused above this many qubits unless a larger cap
/// is passed explicitly.
pub const DEFAULT_MAX_QUBITS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    fn symbol(self) -> char {
        match self {
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        }
    }
}

/// A weighted tensor product of single-qubit Pauli matrices. Sites are
/// 1-based; qubit 1 is the most significant tensor factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub n_qubits: usize,
    pub factors: Vec<(usize, Axis)>,
    pub coefficient: f64,
}

impl PauliTerm {
    pub fn new(n_qubits: usize, factors: Vec<(usize, Axis)>, coefficient: f64) -> Result<Self> {
        let term = Self { n_qubits, factors, coefficient };
        term.validate()?;
        Ok(term)
    }

    fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::InvalidPauli("zero qubits".into()));
        }
        for (i, &(site, _)) in self.factors.iter().enumerate() {
            if site == 0 || site > self.n_qubits {
                return Err(Error::InvalidPauli(format!("site {site} outside 1..={}", self.n_qubits)));
            }
            if self.factors[..i].iter().any(|&(s, _)| s == site) {
                return Err(Error::InvalidPauli(format!("site {site} repeated")));
            }
        }
        if !self.coefficient.is_finite() {
            return Err(Error::InvalidPauli("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// e.g. `Z1Z2`; `I` for the identity string.
    pub fn label(&self) -> String {
        if self.factors.is_empty() {
            return "I".into();
        }
        self.factors.iter().map(|&(s, a)| format!("{}{s}", a.symbol())).collect()
    }

    /// Bit position of a 1-based site within a basis index.
    #[inline]
    fn bit(&self, site: usize) -> usize {
        self.n_qubits - site
    }

    /// Visits the nonzero entries `(row, col, value)`; each row has exactly one.
    fn for_each_entry(&self, mut f: impl FnMut(usize, usize, C64)) {
        let dim = 1usize << self.n_qubits;
        let mut flip = 0usize;
        for &(site, axis) in &self.factors {
            if axis != Axis::Z {
                flip |= 1 << self.bit(site);
            }
        }
        for row in 0..dim {
            let mut phase = C64::new(self.coefficient, 0.0);
            for &(site, axis) in &self.factors {
                let up = (row >> self.bit(site)) & 1 == 0;
                phase *= match (axis, up) {
                    (Axis::X, _) => C64::new(1.0, 0.0),
                    (Axis::Y, true) => C64::new(0.0, -1.0),
                    (Axis::Y, false) => C64::new(0.0, 1.0),
                    (Axis::Z, true) => C64::new(1.0, 0.0),
                    (Axis::Z, false) => C64::new(-1.0, 0.0),
                };
            }
            f(row, row ^ flip, phase);
        }
    }
}

impl fmt::Display for PauliTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*{}", self.coefficient, self.label())
    }
}

pub fn pauli_to_dense(term: &PauliTerm) -> Result<HermitianOperator> {
    pauli_to_dense_with_cap(term, DEFAULT_MAX_QUBITS)
}

pub fn pauli_to_dense_with_cap(term: &PauliTerm, cap: usize) -> Result<HermitianOperator> {
    pauli_sum_to_dense(std::slice::from_ref(term), cap)
}

/// Dense realization of a sum of Pauli strings on the same register.
pub fn pauli_sum_to_dense(terms: &[PauliTerm], cap: usize) -> Result<HermitianOperator> {
    let n = terms.first().map(|t| t.n_qubits).ok_or_else(|| Error::InvalidPauli("empty sum".into()))?;
    if n > cap {
        return Err(Error::Capacity { n_qubits: n, cap });
    }
    let mut m = CMatrix::zeros(1 << n);
    for t in terms {
        t.validate()?;
        if t.n_qubits != n {
            return Err(Error::DimensionMismatch { expected: n, found: t.n_qubits });
        }
        t.for_each_entry(|r, c, v| m[(r, c)] += v);
    }
    Ok(HermitianOperator::from_trusted(m))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FamilyKind {
    Ising,
    Transversal1D,
    Local1D,
    Custom,
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FamilyKind::Ising => "Ising",
            FamilyKind::Transversal1D => "Transversal1D",
            FamilyKind::Local1D => "Local1D",
            FamilyKind::Custom => "Custom",
        };
        f.write_str(s)
    }
}

/// One Hamiltonian term `H_j` (a sum of unit-weight Pauli strings) with its
/// drawn coefficient.
#[derive(Clone, Debug)]
pub struct FamilyTerm {
    pub label: String,
    pub paulis: Vec<PauliTerm>,
    pub operator: HermitianOperator,
    pub coefficient: f64,
}

impl FamilyTerm {
    pub fn from_paulis(paulis: Vec<PauliTerm>, coefficient: f64, cap: usize) -> Result<Self> {
        let label = paulis.iter().map(PauliTerm::label).collect::<Vec<_>>().join("+");
        let operator = pauli_sum_to_dense(&paulis, cap)?;
        Ok(Self { label, paulis, operator, coefficient })
    }

    /// Upper bound on the operator norm from the triangle inequality.
    fn norm_bound(&self) -> f64 {
        self.paulis.iter().map(|p| p.coefficient.abs()).sum()
    }
}

/// A list of Hamiltonian terms. The physical Hamiltonian is
/// `energy_scale * sum_j coefficient_j H_j`; `prescale` divides every `H_j`
/// so that its operator norm is at most one before normalization.
#[derive(Clone, Debug)]
pub struct HamiltonianFamily {
    pub kind: FamilyKind,
    pub n_qubits: usize,
    pub terms: Vec<FamilyTerm>,
    pub prescale: f64,
    pub energy_scale: f64,
}

impl HamiltonianFamily {
    pub fn custom(n_qubits: usize, terms: Vec<FamilyTerm>, prescale: f64) -> Self {
        Self { kind: FamilyKind::Custom, n_qubits, terms, prescale, energy_scale: 1.0 }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coefficient).collect()
    }

    /// Physical weights `mu_j` on the prescaled terms `H_j / prescale`.
    pub fn weights(&self) -> Vec<f64> {
        self.terms.iter().map(|t| self.energy_scale * self.prescale * t.coefficient).collect()
    }

    pub fn with_coefficients(mut self, coefficients: &[f64]) -> Result<Self> {
        if coefficients.len() != self.terms.len() {
            return Err(Error::DimensionMismatch { expected: self.terms.len(), found: coefficients.len() });
        }
        for (t, &c) in self.terms.iter_mut().zip(coefficients) {
            t.coefficient = c;
        }
        Ok(self)
    }

    /// A basis permutation commuting with every term for all coefficient
    /// values: the ring translation for [`FamilyKind::Transversal1D`] and the
    /// global spin flip for [`FamilyKind::Ising`]. Two sites form a single
    /// bond rather than a ring, so there is no translation at `n = 2`.
    pub fn symmetry(&self) -> Option<Vec<u32>> {
        match self.kind {
            FamilyKind::Transversal1D if self.n_qubits > 2 => Some(cyclic_shift(self.n_qubits)),
            FamilyKind::Transversal1D => None,
            FamilyKind::Ising => Some(global_flip(self.n_qubits)),
            FamilyKind::Local1D | FamilyKind::Custom => None,
        }
    }

    pub fn hamiltonian(&self) -> HermitianOperator {
        let mut h = HermitianOperator::zeros(self.dim());
        for t in &self.terms {
            h.add_scaled(&t.operator, self.energy_scale * t.coefficient);
        }
        h
    }
}

/// Builds one of the benchmark families with coefficients drawn from the
/// seeded normal stream in term order.
///
/// * Ising: `X_i` for each site, then `Z_i Z_{i+1}` for open-chain bonds
///   (`2n - 1` terms).
/// * Transversal1D: three uniform fields `sum_i P_i` and nine uniform
///   couplings `sum_i P_i Q_{i+1}` on a ring (12 terms, prescale `n`).
/// * Local1D: independent `P_i` and `P_i Q_{i+1}` on a ring (`12 n` terms).
///
/// Two qubits carry one bond, since both ring bonds would join the same pair
/// and duplicate observables (Local1D then has 15 terms).
///
/// All families use `energy_scale = 1/n`.
pub fn build_family(kind: FamilyKind, n_qubits: usize, seed: u64) -> Result<HamiltonianFamily> {
    build_family_with_cap(kind, n_qubits, seed, DEFAULT_MAX_QUBITS)
}

pub fn build_family_with_cap(kind: FamilyKind, n: usize, seed: u64, cap: usize) -> Result<HamiltonianFamily> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("families need at least 2 qubits, got {n}")));
    }
    if n > cap {
        return Err(Error::Capacity { n_qubits: n, cap });
    }
    let bonds = if n == 2 { 1 } else { n };
    let one = |site: usize, a: Axis| PauliTerm::new(n, vec![(site, a)], 1.0);
    let two = |i: usize, a: Axis, b: Axis| {
        let j = i % n + 1;
        PauliTerm::new(n, vec![(i, a), (j, b)], 1.0)
    };

    let mut groups: Vec<Vec<PauliTerm>> = Vec::new();
    let prescale = match kind {
        FamilyKind::Ising => {
            for i in 1..=n {
                groups.push(vec![one(i, Axis::X)?]);
            }
            for i in 1..n {
                groups.push(vec![two(i, Axis::Z, Axis::Z)?]);
            }
            1.0
        }
        FamilyKind::Transversal1D => {
            for p in Axis::ALL {
                groups.push((1..=n).map(|i| one(i, p)).collect::<Result<_>>()?);
            }
            for p in Axis::ALL {
                for q in Axis::ALL {
                    groups.push((1..=bonds).map(|i| two(i, p, q)).collect::<Result<_>>()?);
                }
            }
            n as f64
        }
        FamilyKind::Local1D => {
            for i in 1..=n {
                for p in Axis::ALL {
                    groups.push(vec![one(i, p)?]);
                }
            }
            for i in 1..=bonds {
                for p in Axis::ALL {
                    for q in Axis::ALL {
                        groups.push(vec![two(i, p, q)?]);
                    }
                }
            }
            1.0
        }
        FamilyKind::Custom => {
            return Err(Error::InvalidArgument("custom families are built with HamiltonianFamily::custom".into()))
        }
    };

    let coefficients = NormalStream::new(seed).normals(groups.len());
    let terms = groups
        .into_iter()
        .zip(coefficients)
        .map(|(paulis, c)| FamilyTerm::from_paulis(paulis, c, cap))
        .collect::<Result<Vec<_>>>()?;
    Ok(HamiltonianFamily { kind, n_qubits: n, terms, prescale, energy_scale: 1.0 / n as f64 })
}

/// Observables `F_j`, each positive semidefinite with `sum_j F_j <= I`.
#[derive(Clone, Debug)]
pub struct ObservableFamily {
    ops: Vec<HermitianOperator>,
    sparse: Vec<SparseHermitian>,
    /// Number of normalized Hamiltonian terms (excluding a completion term).
    pub base_terms: usize,
    pub complete: bool,
    symmetry: Option<Vec<u32>>,
}

impl ObservableFamily {
    /// Wraps arbitrary operators without checking the positivity hypotheses;
    /// see [`ObservableFamily::check_constraints`].
    pub fn from_operators(ops: Vec<HermitianOperator>, complete: bool) -> Result<Self> {
        let dim = ops.first().map(HermitianOperator::dim).ok_or_else(|| Error::InvalidArgument("empty family".into()))?;
        if let Some(op) = ops.iter().find(|o| o.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: op.dim() });
        }
        let sparse = ops.iter().map(SparseHermitian::from_operator).collect();
        let base_terms = if complete { ops.len() - 1 } else { ops.len() };
        Ok(Self { ops, sparse, base_terms, complete, symmetry: None })
    }

    /// Attaches a basis permutation after checking that it commutes with
    /// every observable.
    pub fn with_symmetry(mut self, perm: Vec<u32>) -> Result<Self> {
        if perm.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: perm.len() });
        }
        validate_permutation(&perm)?;
        if let Some(j) = self.sparse.iter().position(|f| !commutes(&perm, f)) {
            return Err(Error::InvalidArgument(format!("observable {j} does not commute with the symmetry")));
        }
        self.symmetry = Some(perm);
        Ok(self)
    }

    pub fn symmetry(&self) -> Option<&[u32]> {
        self.symmetry.as_deref()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.ops[0].dim()
    }

    pub fn operators(&self) -> &[HermitianOperator] {
        &self.ops
    }

    pub fn sparse(&self) -> &[SparseHermitian] {
        &self.sparse
    }

    pub fn sum(&self) -> HermitianOperator {
        let mut s = HermitianOperator::zeros(self.dim());
        for f in &self.ops {
            s.add_scaled(f, 1.0);
        }
        s
    }

    /// `lambda . F`
    pub fn combine(&self, lambda: &[f64]) -> HermitianOperator {
        let mut h = CMatrix::zeros(self.dim());
        for (f, &l) in self.sparse.iter().zip(lambda) {
            f.accumulate_into(&mut h, l);
        }
        HermitianOperator::from_trusted(h)
    }

    /// Measures the hypotheses: smallest eigenvalue over all `F_j`, largest
    /// eigenvalue of `sum_j F_j`, and `||sum_j F_j - I||_F`.
    pub fn check_constraints(&self) -> Result<ConstraintReport> {
        let mut min_eig = f64::INFINITY;
        for f in &self.ops {
            min_eig = min_eig.min(f.min_eigenvalue()?);
        }
        let sum = self.sum();
        let max_sum_eig = sum.max_eigenvalue()?;
        let identity_gap = sum.sub(&HermitianOperator::identity(self.dim())).frobenius_norm();
        Ok(ConstraintReport { min_eig, max_sum_eig, identity_gap })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConstraintReport {
    pub min_eig: f64,
    pub max_sum_eig: f64,
    pub identity_gap: f64,
}

impl ConstraintReport {
    pub fn holds(&self, complete: bool) -> bool {
        self.min_eig >= -1e-12 && self.max_sum_eig <= 1.0 + 1e-12 && (!complete || self.identity_gap <= 1e-12)
    }
}

/// `F_j = (I + H_j / prescale) / (2m)`.
pub fn normalize_family(fam: &HamiltonianFamily) -> Result<ObservableFamily> {
    let m = fam.len();
    if m == 0 {
        return Err(Error::InvalidArgument("empty family".into()));
    }
    let dim = fam.dim();
    let scale = 1.0 / (2.0 * m as f64);
    let identity = HermitianOperator::identity(dim);
    let mut ops = Vec::with_capacity(m);
    for (index, term) in fam.terms.iter().enumerate() {
        let bound = term.norm_bound() / fam.prescale;
        if bound > 1.0 + 1e-9 {
            let norm = term.operator.spectral_norm()? / fam.prescale;
            if norm > 1.0 + 1e-9 {
                return Err(Error::Normalization { index, norm });
            }
        }
        let mut f = identity.clone();
        f.add_scaled(&term.operator, 1.0 / fam.prescale);
        ops.push(f.scaled(scale));
    }
    let obs = ObservableFamily::from_operators(ops, false)?;
    match fam.symmetry() {
        Some(perm) => obs.with_symmetry(perm),
        None => Ok(obs),
    }
}

/// Appends `I - sum_j F_j` so that the family sums to the identity.
pub fn complete_family(obs: &ObservableFamily) -> Result<ObservableFamily> {
    let rest = HermitianOperator::identity(obs.dim()).sub(&obs.sum());
    let mut ops = obs.operators().to_vec();
    ops.push(rest);
    let mut out = ObservableFamily::from_operators(ops, true)?;
    out.base_terms = obs.base_terms;
    match obs.symmetry() {
        Some(perm) => out.with_symmetry(perm.to_vec()),
        None => Ok(out),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Physical weights on the prescaled terms.
    pub mu: Vec<f64>,
    /// Dual parameters reproducing the target state.
    pub lambda: Vec<f64>,
    pub dual_optimum: f64,
}

#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub label: String,
    pub observables: ObservableFamily,
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub ground_truth: Option<GroundTruth>,
}

impl ProblemInstance {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Number of normalized Hamiltonian terms `m`.
    pub fn base_terms(&self) -> usize {
        self.observables.base_terms
    }

    /// `mu_j = -(lambda_j - lambda_c) / (2 m beta)`, where `lambda_c` is the
    /// completion coefficient (zero for incomplete families).
    pub fn recover_mu(&self, lambda: &[f64]) -> Vec<f64> {
        let m = self.base_terms();
        let shift = if self.observables.complete { lambda[m] } else { 0.0 };
        let denom = 2.0 * m as f64 * self.beta;
        lambda[..m].iter().map(|l| -(l - shift) / denom).collect()
    }

    /// Inverse of [`ProblemInstance::recover_mu`] with the completion
    /// coefficient fixed at zero.
    pub fn lambda_from_mu(&self, mu: &[f64]) -> Vec<f64> {
        lambda_from_mu(mu, self.beta, self.observables.complete)
    }
}

fn lambda_from_mu(mu: &[f64], beta: f64, complete: bool) -> Vec<f64> {
    let scale = -2.0 * mu.len() as f64 * beta;
    let mut lambda: Vec<f64> = mu.iter().map(|m| scale * m).collect();
    if complete {
        lambda.push(0.0);
    }
    lambda
}

/// Synthetic instance: the family's weights are the ground truth `mu*`; the
/// targets are the moments of the Gibbs state `exp(-beta H(mu*)) / Z`.
pub fn make_instance(fam: &HamiltonianFamily, beta: f64, complete: bool) -> Result<ProblemInstance> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    let mut obs = normalize_family(fam)?;
    if complete {
        obs = complete_family(&obs)?;
    }
    let mu = fam.weights();
    let lambda = lambda_from_mu(&mu, beta, complete);
    let snap = snapshot(&lambda, &obs, None)?;
    let spread = snap.eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if spread > EXP_ARGUMENT_LIMIT {
        return Err(Error::Overflow { argument: spread });
    }
    let alpha = snap.moments.clone();
    let dual_optimum = snap.log_z - dot(&lambda, &alpha);
    let label = format!("{}-{}q", fam.kind, fam.n_qubits);
    Ok(ProblemInstance {
        label,
        observables: obs,
        alpha,
        beta,
        ground_truth: Some(GroundTruth { mu, lambda, dual_optimum }),
    })
}
