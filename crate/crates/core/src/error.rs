use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {x} lies beyond the {materialized} materialized branches and the tail generator refused it")]
    PointInTailGap { x: f64, materialized: usize },

    #[error("malformed branch {index}: {reason}")]
    MalformedBranch { index: usize, reason: String },

    #[error("iterate partition exceeded {cap} cells (increase tail_tol or lower the order)")]
    TruncationOverflow { cap: usize },

    #[error("no iterate up to order {n_cap} reaches the slope target; best was {best_slope} at order {best_order}")]
    NotReached {
        n_cap: usize,
        best_order: usize,
        best_slope: f64,
    },

    #[error("first-return construction captured only {captured} of the mass within {max_return_time} steps")]
    NoReturnFound { captured: f64, max_return_time: usize },

    #[error("unknown map name `{0}`")]
    UnknownName(String),

    #[error("branch {index} is not affine; exact step pushforward refused")]
    NonAffineBranch { index: usize },

    #[error("input density increases at breakpoint {index}")]
    InputNotMonotone { index: usize },

    #[error("contraction factor {alpha} is not below 1")]
    AlphaNotContractive { alpha: f64 },

    #[error("cannot bracket the inverse of branch {branch} at y = {y}")]
    InverseFailure { branch: usize, y: f64 },

    #[error("method unavailable: {0}")]
    MethodUnavailable(&'static str),

    #[error("observable is not centered under the invariant measure (mean {mean})")]
    NotCentered { mean: f64 },

    #[error("orbit left [0,1] at step {step} with value {value}")]
    OrbitEscape { step: usize, value: f64 },

    #[error("sample set is empty")]
    EmptySamples,

    #[error("cdf is not invertible: {0}")]
    CdfNotInvertible(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid step function: {0}")]
    InvalidStep(String),

    #[error("map configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
