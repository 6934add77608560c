use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("combined support of {size} atoms exceeds the exact solver cap of {cap}; use dbl_distance_approx")]
    SupportTooLarge { size: usize, cap: usize },

    #[error("non-finite state at step {step}, particle {particle}")]
    NonFinite { step: usize, particle: usize },

    #[error("weight overflow at step {step}, particle {particle}")]
    WeightOverflow { step: usize, particle: usize },

    #[error("control evaluation failed at step {step}, particle {particle}: {reason}")]
    Control {
        step: usize,
        particle: usize,
        reason: String,
    },

    #[error("common control is nonzero but the common-noise intensity is zero")]
    CommonControlWithoutNoise,

    #[error("common control energy {energy} exceeds the admissible radius {radius}")]
    ControlRadius { energy: f64, radius: f64 },

    #[error("functional value {value} exceeds its declared bound {bound}")]
    FunctionalBound { value: f64, bound: f64 },

    #[error("event never observed under either estimator ({replicas} replicas); increase the tilt or the budget")]
    NoHits { replicas: usize },

    #[error("estimated probability is zero at n = {n}; enable importance sampling")]
    ZeroProbability { n: usize },

    #[error("singular least-squares design: {0}")]
    SingularDesign(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
