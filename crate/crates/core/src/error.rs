use alloc::string::String;
use core::fmt;

use crate::math::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeometryError {
    /// Two points that must differ coincide.
    Coincident,
    /// A pair is closer than the excluded-ball radius.
    InsideExcludedBall { distance: f64, radius: f64 },
    /// The formation barycenter is not moving.
    StationaryBarycenter,
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::Coincident => write!(f, "coincident points"),
            GeometryError::InsideExcludedBall { distance, radius } => write!(
                f,
                "pair distance {distance} m is inside the excluded ball of radius {radius} m"
            ),
            GeometryError::StationaryBarycenter => {
                write!(f, "barycenter speed is zero; barrier is undefined")
            }
        }
    }
}

impl core::error::Error for GeometryError {}

/// A configuration value that violates its contract.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted path of the offending field, e.g. `agents[2].limits.u_min`.
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl core::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptError {
    Empty,
    Unordered { index: usize },
    NonFinite { index: usize },
    BeforeStart { t: f64, start: f64 },
}

impl fmt::Display for ScriptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptError::Empty => write!(f, "obstacle script has no segments"),
            ScriptError::Unordered { index } => {
                write!(f, "segment {index} does not start after its predecessor")
            }
            ScriptError::NonFinite { index } => write!(f, "segment {index} is not finite"),
            ScriptError::BeforeStart { t, start } => {
                write!(f, "time {t} s precedes script start {start} s")
            }
        }
    }
}

impl core::error::Error for ScriptError {}

#[derive(Debug, Clone, PartialEq)]
pub enum QpError {
    DimensionMismatch { expected: usize, found: usize },
    /// No point satisfies every row and the box.
    Infeasible,
    /// The active-set iteration did not terminate.
    IterationLimit,
}

impl fmt::Display for QpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QpError::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            QpError::Infeasible => write!(f, "constraint set is empty"),
            QpError::IterationLimit => write!(f, "active-set iteration limit reached"),
        }
    }
}

impl core::error::Error for QpError {}

/// Why a simulation stopped early.
#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    Config(ConfigError),
    Script { obstacle: usize, source: ScriptError },
    /// Degenerate geometry at `step`, with the positions involved.
    Geometry {
        step: usize,
        t: f64,
        pair: String,
        positions: (Vec2, Vec2),
        source: GeometryError,
    },
    Qp { step: usize, t: f64, source: QpError },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Config(e) => write!(f, "invalid scenario: {e}"),
            SimError::Script { obstacle, source } => {
                write!(f, "obstacle {obstacle}: {source}")
            }
            SimError::Geometry {
                step,
                t,
                pair,
                positions,
                source,
            } => write!(
                f,
                "step {step} (t = {t} s), pair {pair}: {source}; positions {} and {}",
                positions.0, positions.1
            ),
            SimError::Qp { step, t, source } => write!(f, "step {step} (t = {t} s): {source}"),
        }
    }
}

impl core::error::Error for SimError {}

impl From<ConfigError> for SimError {
    fn from(e: ConfigError) -> Self {
        SimError::Config(e)
    }
}
