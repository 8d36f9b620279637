use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid local dimension {0}: need d >= 2")]
    InvalidDimension(usize),
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{what} limited to {limit} sites for d = {local_dim}, got {n_sites}")]
    CapExceeded {
        what: &'static str,
        n_sites: usize,
        local_dim: usize,
        limit: usize,
    },
    #[error("operator is not Hermitian (residual {residual:e} > tolerance {tolerance:e})")]
    NotHermitian { residual: f64, tolerance: f64 },
    #[error("operator is not traceless (|tr O| = {0:e})")]
    NotTraceless(f64),
    #[error("operator has zero norm")]
    ZeroOperator,
    #[error("numerical inconsistency: {0}")]
    Inconsistent(String),
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no variance supplied for subset mask {0:#b}")]
    MissingSubset(u64),
    #[error("eigendecomposition failed: {0}")]
    Linalg(String),
}

impl Error {
    /// True for failures of a numerical check (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotHermitian { .. }
                | Error::NotTraceless(_)
                | Error::Inconsistent(_)
                | Error::Linalg(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
