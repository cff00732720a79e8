use std::path::PathBuf;

/// Errors produced by the tree-WSV library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("zero row {0}")]
    ZeroRow(usize),

    #[error("zero column {0}")]
    ZeroColumn(usize),

    #[error("negative value at ({row},{col})")]
    NegativeValue { row: usize, col: usize },

    #[error("non-finite value at ({row},{col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("cannot satisfy root degree >= 3 ({distinct} distinct points)")]
    RootDegree { distinct: usize },

    #[error("tree violates root-degree precondition: path matrix rank {rank} < {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("tree too large for factorization basis: {leaves} leaves (cap {cap})")]
    TooLarge { leaves: usize, cap: usize },

    #[error("NNLS did not converge in {iterations} iterations (residual {residual:.3e})")]
    NnlsNotConverged { iterations: usize, residual: f64 },

    #[error("rank-deficient right-hand side: every basis pair has identical histograms")]
    DegenerateRhs,

    #[error("infeasible marginals: masses {0} and {1} differ")]
    InfeasibleMarginals(f64, f64),

    #[error("transport solver failed: {0}")]
    Transport(String),

    #[error("size guard: {0}")]
    SizeGuard(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NnlsNotConverged { .. }
                | Error::DegenerateRhs
                | Error::RankDeficient { .. }
                | Error::Transport(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Json { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
