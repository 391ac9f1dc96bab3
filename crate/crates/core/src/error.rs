use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector that must be normalized is (numerically) zero.
    #[error("degenerate vector: norm {norm:e} below {min:e}")]
    DegenerateVector { norm: f64, min: f64 },

    #[error("GBR lambda must be strictly positive, got {0}")]
    NonPositiveLambda(f64),

    #[error("combined transform is singular (|det| = {0:e})")]
    SingularTransform(f64),

    /// Decomposition at an eta with sin(eta) ~ 0, or a combined transform whose
    /// third row carries no rotation information.
    #[error("degenerate eta for decomposition: {0}")]
    DegenerateEta(String),

    /// det(G21) * lambda1 <= 0: the requested eta has the wrong sign.
    #[error("decomposition gives non-positive lambda2 = {0}")]
    NegativeLambda(f64),

    #[error("linear system is rank deficient")]
    RankDeficient,

    #[error("no feasible eta among {candidates} candidates")]
    NoFeasibleEta { candidates: usize },

    #[error("sign of eta_hat ({eta_hat}) differs from eta ({eta}): inverted geometry")]
    SignMismatch { eta: f64, eta_hat: f64 },

    #[error("rotation is degenerate for translation/depth recovery (r13^2 + r23^2 = {0:e})")]
    DegenerateRotation(f64),

    #[error("insufficient correspondences: {0}")]
    InsufficientCorrespondences(String),

    #[error("correspondence set has no pixel correspondences")]
    EmptySet,

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid field {field}: {message}")]
    InvalidField { field: String, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("every sampled minimal set was degenerate")]
    AllSamplesDegenerate,

    #[error("no RANSAC hypothesis converged")]
    NoHypothesis,

    #[error("pose graph is disconnected: view {0} is unreachable from view 0")]
    DisconnectedGraph(usize),

    #[error("rejection sampling exhausted after {0} attempts")]
    RejectionExhausted(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
