use thiserror::Error;

/// Errors produced by the ring-trap library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown species '{0}'")]
    UnknownSpecies(String),

    #[error("unrecognized energy unit '{0}' (expected J, MHz or uK)")]
    UnknownUnit(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("resolution too coarse: {cells} cells between {between}, need at least {required}")]
    ResolutionTooCoarse {
        between: &'static str,
        cells: usize,
        required: usize,
    },

    #[error("grid of {nodes} nodes exceeds the node cap of {cap}")]
    MemoryBudget { nodes: usize, cap: usize },

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e}, tolerance {tolerance:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("position z = {0:.3e} m lies below the mirror surface")]
    BelowMirror(f64),

    #[error("point ({x:.3e}, {y:.3e}, {z:.3e}) m lies outside the computational domain")]
    OutOfDomain { x: f64, y: f64, z: f64 },

    #[error("point ({x:.3e}, {y:.3e}, {z:.3e}) m lies inside a conductor")]
    InsideConductor { x: f64, y: f64, z: f64 },

    #[error("no trap minimum found: {0}")]
    NoMinimum(String),

    #[error("Hessian at the minimum is not positive definite (eigenvalues {0:.3e}, {1:.3e})")]
    NonPositiveCurvature(f64, f64),

    #[error("no trap forms anywhere in the voltage range {lo} V to {hi} V")]
    NoTrapInRange { lo: f64, hi: f64 },

    #[error("threshold {threshold:.3e} J exceeds trap depth {depth:.3e} J")]
    ThresholdExceedsDepth { threshold: f64, depth: f64 },

    #[error("integration step {dt:.3e} s exceeds the limit {limit:.3e} s (trap period / 40)")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("compensation-pad search failed: {0}")]
    SearchFailure(String),

    #[error("geometry has no compensation pad")]
    NoCompensationPad,

    #[error("config error at '{path}': {message}")]
    Config { path: String, message: String },

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
