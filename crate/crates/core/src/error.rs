use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("undefined orientation: velocity vector is zero")]
    UndefinedOrientation,

    #[error("degenerate wall segment: endpoints coincide")]
    DegenerateWall,

    #[error("bearing undefined: points coincide")]
    CoincidentPoints,

    #[error("degenerate aperture: squared array aperture is zero at angle {angle}")]
    DegenerateAperture { angle: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("probability vector does not sum to one (sum = {sum})")]
    NotNormalized { sum: f64 },

    #[error("association instance too large to enumerate ({legacy} features x {measurements} measurements)")]
    InstanceTooLarge { legacy: usize, measurements: usize },

    #[error("degenerate weights: all particle weights are zero")]
    DegenerateWeights,

    #[error("filter divergence at step {step}: all agent particle weights vanished ({features} features, {measurements} measurements)")]
    FilterDivergence {
        step: usize,
        features: usize,
        measurements: usize,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
