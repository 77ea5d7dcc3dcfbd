//! Test oracles for `scbf-core` that share no formula code with it:
//! finite-difference Lie derivatives over independently written barriers,
//! a grid-plus-projection QP oracle, a trace safety audit, and seeded
//! samplers for property tests.

pub mod audit;
pub mod barriers;
pub mod fd;
pub mod qp_oracle;
pub mod sampling;

pub use audit::{safety_audit, Violation};
pub use fd::{fd_lie_derivatives, LieEstimate, StateLayout};
pub use qp_oracle::{qp_grid_oracle, OracleResult};
