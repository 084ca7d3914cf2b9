//! Crate-wide error type.

use std::fmt;

/// Errors produced by graph construction, model evaluation, inference,
/// learning and file I/O.
#[derive(Debug)]
pub enum Error {
    /// A structural graph invariant was violated (self-loop, duplicate edge,
    /// endpoint out of range).
    InvalidGraph(String),
    /// An intersection references a road identifier that is not in the roads list.
    UnknownRoad(String),
    /// Model parameters outside their domain (xi <= 0, j < 0, ...).
    InvalidParams(String),
    /// The missing set is empty; there is nothing to reconstruct.
    EmptyMissingSet,
    /// An explicit index does not address a vertex.
    IndexOutOfRange {
        index: usize,
        n: usize,
    },
    /// Vector/matrix dimensions do not agree.
    DimensionMismatch {
        expected: usize,
        got: usize,
    },
    /// Pearson correlation is undefined because one side has zero variance.
    ZeroVariance,
    /// Cholesky factorization failed; the matrix is not positive definite.
    Factorization,
    /// Random masking kept producing an empty missing or observed set.
    DegenerateMask {
        p: f64,
        redraws: u32,
    },
    /// An iterative procedure did not converge within its cap.
    NonConvergence(String),
    /// Malformed input that is not tied to a file location.
    InvalidInput(String),
    /// Malformed text input with its location.
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidGraph(msg) => write!(f, "invalid graph: {msg}"),
            Self::UnknownRoad(name) => write!(f, "unknown road identifier in intersection: {name}"),
            Self::InvalidParams(msg) => write!(f, "invalid parameters: {msg}"),
            Self::EmptyMissingSet => write!(f, "missing set is empty: nothing to reconstruct"),
            Self::IndexOutOfRange { index, n } => {
                write!(f, "index {index} out of range for {n} vertices")
            }
            Self::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Self::ZeroVariance => write!(f, "correlation undefined: zero variance"),
            Self::Factorization => write!(f, "precision matrix factorization failed"),
            Self::DegenerateMask { p, redraws } => write!(
                f,
                "mask draw with p = {p} left the missing or observed set empty after {redraws} redraws"
            ),
            Self::NonConvergence(msg) => write!(f, "did not converge: {msg}"),
            Self::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Self::Parse { path, line, msg } => write!(f, "{path}:{line}: {msg}"),
            Self::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
