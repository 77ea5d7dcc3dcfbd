//! Scenario files, trace output and the `scbf` command line for
//! [`scbf_core`].

pub mod cli;
pub mod feasibility;
pub mod scenario;
pub mod sweep;
pub mod trace;

pub use scenario::{parse_scenario, parse_scenario_str, ScenarioError, ScenarioFile};
pub use trace::{write_trace, TraceFileHeader};
