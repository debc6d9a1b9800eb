use thiserror::Error;

/// Errors produced by fitting, conversion, diagnostics and scoring.
///
/// Variants split into two families: validation failures (bad inputs,
/// mismatched shapes, malformed files) and numerical failures (solvers that
/// could not produce a trustworthy answer). [`Error::is_numerical`] tells
/// them apart; the CLI maps the two families to different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("eigen-solver failed to converge on a {dim}x{dim} matrix")]
    EigenFailure { dim: usize },

    #[error("matrix is not positive semi-definite: eigenvalue {eigenvalue:e} below -{tolerance:e}")]
    NotPsd { eigenvalue: f64, tolerance: f64 },

    #[error("matrix is singular (no positive eigenvalue and zero ridge)")]
    SingularMatrix,

    #[error("source covariance of block {block} is singular; use a positive ridge")]
    SingularSourceCovariance { block: usize },

    #[error("affine map matrix is not symmetric PSD (asymmetry {asymmetry:e}, min eigenvalue {min_eigenvalue:e})")]
    InvalidAffineMap { asymmetry: f64, min_eigenvalue: f64 },

    #[error("sinkhorn scaling produced non-finite values at iteration {iteration}; try a larger epsilon (current {epsilon:e})")]
    SinkhornNumerical { iteration: usize, epsilon: f64 },

    #[error("insufficient samples: need at least {required} frames, got {actual}")]
    InsufficientSamples { required: usize, actual: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("block dimension {block_dim} does not divide embedding dimension {dim}")]
    InvalidBlockDim { block_dim: usize, dim: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value at frame {frame}, dimension {dim}")]
    NonFinite { frame: usize, dim: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("error rate undefined: reference is empty after normalization")]
    EmptyReference,

    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,

    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },

    #[error(transparent)]
    Format(#[from] crate::io::FormatError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

impl Error {
    /// True for failures of a numerical method, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EigenFailure { .. }
                | Error::NotPsd { .. }
                | Error::SingularMatrix
                | Error::SingularSourceCovariance { .. }
                | Error::InvalidAffineMap { .. }
                | Error::SinkhornNumerical { .. }
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
