//! Hybrid synergistic control barrier functions for multi-agent unicycle
//! fleets: barrier evaluation, hysteresis mode switching, the min-norm
//! heading-rate safety filter, and the closed-loop simulator.
//!
//! `no_std` with `alloc`; file formats and the command line live in the
//! companion `scbf-sim` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod constraints;
pub mod dynamics;
pub mod error;
pub mod math;
pub mod nominal;
pub mod qp;
pub mod scbf;
pub mod sim;

pub use constraints::{ConstraintMode, ConstraintRow, ConstraintSystem, FeasibilityParams, FeasibilityReport};
pub use dynamics::{AgentInput, AgentLimits, AgentState, ObstacleScript, ObstacleState, ScriptSegment};
pub use error::{ConfigError, GeometryError, QpError, ScriptError, SimError};
pub use math::{Angle, Vec2};
pub use nominal::{FormationSpec, NominalGains};
pub use qp::{QpProblem, QpSolution, QpStatus};
pub use scbf::{BarrierEval, ClassK, Encounter, HysteresisRule, Mode, PairKind, SafetyPair, ScbfParams};
pub use sim::{ScenarioConfig, SimTrace, StepRecord, Summary};
