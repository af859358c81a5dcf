use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("step {n} out of range 0..={max}")]
    StepRange { n: usize, max: usize },

    #[error(
        "noise schedule too weak: alpha_bar[N] = {alpha_bar_final:.6} exceeds {tolerance}; \
         increase beta_end or the number of steps"
    )]
    ScheduleTooWeak { alpha_bar_final: f64, tolerance: f64 },

    #[error("loss must be a scalar, got a tensor with {len} elements")]
    NonScalarLoss { len: usize },

    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("non-finite values in {context}")]
    NonFiniteValue { context: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension {dim} is constant over the training partition")]
    DegenerateDimension { dim: usize },

    #[error("best-f1 threshold selection needs at least one positive label; use a quantile strategy")]
    DegenerateLabels,

    #[error("probability {value} outside [0, 1]")]
    ProbabilityRange { value: f64 },

    #[error("series too short: length {len} < window {window}")]
    SeriesTooShort { len: usize, window: usize },

    #[error("window size {window} exceeds series length {len}; no windows can be formed")]
    EmptyWindowSet { window: usize, len: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether this error reflects bad user input (as opposed to a runtime
    /// failure such as divergence or I/O). The CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ShapeMismatch { .. }
                | Error::Config(_)
                | Error::StepRange { .. }
                | Error::ScheduleTooWeak { .. }
                | Error::Parse { .. }
                | Error::DegenerateDimension { .. }
                | Error::DegenerateLabels
                | Error::ProbabilityRange { .. }
                | Error::SeriesTooShort { .. }
                | Error::EmptyWindowSet { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
