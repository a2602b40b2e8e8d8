use thiserror::Error;

/// Errors produced by tree, algebra, field, and chain operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An operation touched vertices beyond the stored truncation depth.
    /// The caller must rebuild the tree with a larger depth.
    #[error("operation escapes the stored truncation: {0}")]
    Truncation(String),

    #[error("vertex {0} is not in the stored vertex set")]
    UnknownVertex(String),

    #[error("region is not connected: {0}")]
    Disconnected(String),

    /// A boundary vertex with more than one neighbour inside the region:
    /// the underlying graph contains a cycle.
    #[error("graph is not a tree: {0}")]
    NotATree(String),

    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("dense dimension {dim} exceeds the practical cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NonHermitian { deviation: f64 },

    #[error("operator is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("singular operator: {0}")]
    Singular(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// The fixed-point equation admits more than one solution direction;
    /// the ambiguity is surfaced instead of silently picking a branch.
    #[error("fixed-point solution is degenerate (multiplicity {multiplicity})")]
    DegenerateFixedPoint { multiplicity: usize },

    #[error("squared moduli are not bi-stochastic (max deviation {deviation:.3e})")]
    NotBistochastic { deviation: f64 },

    #[error("no amplitude matrix stored for edge {0}")]
    MissingAmplitude(String),

    /// The generalized-reconstruction route requires every amplitude to have
    /// modulus d^(-1/2); other fields are refused rather than guessed at.
    #[error("amplitude moduli are not uniform (max deviation {deviation:.3e})")]
    NonUniformModulus { deviation: f64 },

    #[error("no path of {needed} vertices embeds in the tree (longest has {available})")]
    PathNotEmbeddable { needed: usize, available: usize },

    /// An internal consistency assertion failed; indicates a convention bug,
    /// not a user error.
    #[error("volume-invariance assertion failed (deviation {deviation:.3e})")]
    InvarianceAssertion { deviation: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
