use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: max |A - A^H| entry = {max_asymmetry:e}")]
    NotHermitian { max_asymmetry: f64 },

    #[error("eigensolver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("eigenvalue {eigenvalue:e} lies outside the domain of the matrix function")]
    Domain { eigenvalue: f64 },

    #[error("operator is not supported on the support of the first argument (eigenvalue {eigenvalue:e})")]
    Support { eigenvalue: f64 },

    #[error("numeric overflow: exponent argument {argument:e} is out of range")]
    Overflow { argument: f64 },

    #[error("inner product has imaginary part {imag:e}, expected a real value")]
    NotReal { imag: f64 },

    #[error("{n_qubits} qubits exceed the dense capacity limit of {cap}")]
    Capacity { n_qubits: usize, cap: usize },

    #[error("invalid Pauli term: {0}")]
    InvalidPauli(String),

    #[error("term {index} has operator norm {norm} > 1 after prescaling")]
    Normalization { index: usize, norm: f64 },

    #[error("moment {index} is non-positive ({value:e}); the observable vanishes on the Gibbs support")]
    NonPositiveMoment { index: usize, value: f64 },

    #[error("diagonal entry {index} of P is zero; the QIS Jacobian is singular")]
    SingularMoments { index: usize },

    #[error("insufficient data: need at least {needed} iterations, trace has {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
