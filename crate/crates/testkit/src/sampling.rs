//! Seeded random states and problems for property and acceptance tests.

use std::f64::consts::PI;

use rand::Rng;
use scbf_core::constraints::{ConstraintRow, ConstraintSystem};
use scbf_core::{AgentState, ObstacleState, PairKind, QpProblem, Vec2};

pub fn agent_state<R: Rng>(rng: &mut R, extent: f64) -> AgentState {
    AgentState::new(
        rng.gen_range(-extent..extent),
        rng.gen_range(-extent..extent),
        rng.gen_range(-PI..PI),
        rng.gen_range(0.3..=0.8),
    )
}

/// An obstacle at a distance in `distance` from `from`, with speed up to
/// `max_speed` and acceleration up to `max_accel`.
pub fn obstacle_near<R: Rng>(
    rng: &mut R,
    from: Vec2,
    distance: (f64, f64),
    max_speed: f64,
    max_accel: f64,
) -> ObstacleState {
    let d = rng.gen_range(distance.0..distance.1);
    let b = rng.gen_range(-PI..PI);
    let speed = rng.gen_range(0.0..=max_speed);
    let heading = rng.gen_range(-PI..PI);
    let accel = rng.gen_range(0.0..=max_accel);
    let accel_dir = rng.gen_range(-PI..PI);
    ObstacleState {
        p: from + Vec2::new(d * b.cos(), d * b.sin()),
        v: Vec2::new(speed * heading.cos(), speed * heading.sin()),
        a: Vec2::new(accel * accel_dir.cos(), accel * accel_dir.sin()),
    }
}

/// A partner agent at a distance in `distance` from `from`.
pub fn agent_near<R: Rng>(rng: &mut R, from: Vec2, distance: (f64, f64)) -> AgentState {
    let d = rng.gen_range(distance.0..distance.1);
    let b = rng.gen_range(-PI..PI);
    AgentState::new(
        from.x + d * b.cos(),
        from.y + d * b.sin(),
        rng.gen_range(-PI..PI),
        rng.gen_range(0.3..=0.8),
    )
}

/// A random problem with a known feasible point strictly inside the box.
pub fn feasible_qp<R: Rng>(rng: &mut R, n: usize, rows: usize) -> QpProblem {
    let r_max: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..=1.0)).collect();
    let inside: Vec<f64> = r_max.iter().map(|m| rng.gen_range(-0.9 * m..0.9 * m)).collect();
    let rows = (0..rows)
        .map(|_| {
            let scale = 10f64.powf(rng.gen_range(-1.0..2.0));
            let coefficients: Vec<f64> = (0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
            let at: f64 = coefficients.iter().zip(&inside).map(|(g, x)| g * x).sum();
            let margin = if rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(0.0..0.3) * scale
            };
            ConstraintRow {
                coefficients,
                bound: at + margin,
                source: PairKind::AgentAgent { i: 0, j: 1 },
                active_hint: true,
            }
        })
        .collect();
    let r_desired = r_max.iter().map(|m| rng.gen_range(-1.5 * m..1.5 * m)).collect();
    QpProblem::new(
        r_desired,
        ConstraintSystem {
            rows,
            r_max,
            n_agents: n,
        },
    )
}
