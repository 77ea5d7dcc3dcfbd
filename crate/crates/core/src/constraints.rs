//! Linear inequality rows `G r ≤ b` over the stacked heading rates, and the
//! sufficient feasibility margin for bounded turn rates.

use alloc::vec::Vec;

use crate::dynamics::{AgentLimits, AgentState, ObstacleState};
use crate::error::GeometryError;
use crate::math;
use crate::scbf::{BarrierEval, Encounter, PairKind, SafetyPair, ScbfParams, COEFFICIENT_FLOOR};

/// Which obstacle barriers enter the program. Agent–agent rows are always
/// present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintMode {
    /// One row per agent–obstacle pair.
    Pairwise,
    /// One row per obstacle on the formation barycenter.
    Barycenter,
    /// Both of the above.
    Both,
}

impl ConstraintMode {
    pub fn pairwise_obstacles(self) -> bool {
        matches!(self, ConstraintMode::Pairwise | ConstraintMode::Both)
    }

    pub fn barycenter_obstacles(self) -> bool {
        matches!(self, ConstraintMode::Barycenter | ConstraintMode::Both)
    }
}

/// `coefficients · r ≤ bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    /// Dense, one entry per agent.
    pub coefficients: Vec<f64>,
    pub bound: f64,
    pub source: PairKind,
    /// False when every coefficient is below [`COEFFICIENT_FLOOR`].
    pub active_hint: bool,
}

impl ConstraintRow {
    pub fn residual(&self, r: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(r)
            .map(|(g, x)| g * x)
            .sum::<f64>()
            - self.bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub rows: Vec<ConstraintRow>,
    /// Per-agent heading-rate bound; the box is `|r_k| ≤ r_max[k]`.
    pub r_max: Vec<f64>,
    pub n_agents: usize,
}

impl ConstraintSystem {
    pub fn new(n_agents: usize, r_max: Vec<f64>) -> Self {
        Self {
            rows: Vec::new(),
            r_max,
            n_agents,
        }
    }

    pub fn is_satisfied(&self, r: &[f64], tol: f64) -> bool {
        r.iter().zip(&self.r_max).all(|(x, m)| x.abs() <= m + tol)
            && self.rows.iter().all(|row| row.residual(r) <= tol)
    }
}

/// Rows for `n_agents` agents and `n_obstacles` obstacles in `mode`.
pub fn expected_row_count(n_agents: usize, n_obstacles: usize, mode: ConstraintMode) -> usize {
    let agent_rows = n_agents * n_agents.saturating_sub(1) / 2;
    let mut rows = agent_rows;
    if mode.pairwise_obstacles() {
        rows += n_agents * n_obstacles;
    }
    if mode.barycenter_obstacles() {
        rows += n_obstacles;
    }
    rows
}

/// The canonical, deterministically ordered pair list: agent–obstacle pairs
/// by `(i, j)`, barycenter pairs by `j`, then agent–agent pairs by `(i, j)`.
pub fn build_pairs(
    n_agents: usize,
    obstacle_d_min: &[f64],
    agent_d_min: f64,
    mode: ConstraintMode,
) -> Vec<SafetyPair> {
    let mut pairs = Vec::new();
    if mode.pairwise_obstacles() {
        for agent in 0..n_agents {
            for (obstacle, &d) in obstacle_d_min.iter().enumerate() {
                pairs.push(SafetyPair::new(PairKind::AgentObstacle { agent, obstacle }, d));
            }
        }
    }
    if mode.barycenter_obstacles() {
        for (obstacle, &d) in obstacle_d_min.iter().enumerate() {
            pairs.push(SafetyPair::new(PairKind::BarycenterObstacle { obstacle }, d));
        }
    }
    for i in 0..n_agents {
        for j in (i + 1)..n_agents {
            pairs.push(SafetyPair::new(PairKind::AgentAgent { i, j }, agent_d_min));
        }
    }
    pairs
}

/// Geometry of `pair` at the given snapshot.
pub fn encounter_for(pair: &SafetyPair, agents: &[AgentState], obstacles: &[ObstacleState]) -> Encounter {
    match pair.kind {
        PairKind::AgentObstacle { agent, obstacle } => Encounter::agent_obstacle(
            agent,
            &agents[agent],
            &obstacles[obstacle],
            pair.effective_d_min(),
        ),
        PairKind::AgentAgent { i, j } => {
            Encounter::agent_agent(i, &agents[i], j, &agents[j], pair.effective_d_min())
        }
        PairKind::BarycenterObstacle { obstacle } => {
            Encounter::barycenter(agents, &obstacles[obstacle], pair.effective_d_min())
        }
    }
}

/// `ḣ2 ≤ -α2(h2)` written as a row in the heading rates, with the
/// accelerations fixed at their desired values.
pub fn row_from_eval(
    source: PairKind,
    eval: &BarrierEval,
    n_agents: usize,
    a_desired: &[f64],
    params: &ScbfParams,
) -> ConstraintRow {
    let mut coefficients = alloc::vec![0.0; n_agents];
    let mut bound = -eval.lf - params.alpha2.eval(eval.h2);
    for g in &eval.gains {
        coefficients[g.agent] += g.r;
        bound -= g.a * a_desired[g.agent];
    }
    let active_hint = coefficients.iter().any(|c| c.abs() > COEFFICIENT_FLOOR);
    ConstraintRow {
        coefficients,
        bound,
        source,
        active_hint,
    }
}

pub fn row_agent_obstacle(
    pair: &SafetyPair,
    agents: &[AgentState],
    obstacles: &[ObstacleState],
    a_desired: &[f64],
    params: &ScbfParams,
) -> Result<ConstraintRow, GeometryError> {
    debug_assert!(matches!(pair.kind, PairKind::AgentObstacle { .. }));
    pair_row(pair, agents, obstacles, a_desired, params).map(|(row, _)| row)
}

pub fn row_agent_agent(
    pair: &SafetyPair,
    agents: &[AgentState],
    a_desired: &[f64],
    params: &ScbfParams,
) -> Result<ConstraintRow, GeometryError> {
    debug_assert!(matches!(pair.kind, PairKind::AgentAgent { .. }));
    pair_row(pair, agents, &[], a_desired, params).map(|(row, _)| row)
}

pub fn row_barycenter(
    pair: &SafetyPair,
    agents: &[AgentState],
    obstacles: &[ObstacleState],
    a_desired: &[f64],
    params: &ScbfParams,
) -> Result<ConstraintRow, GeometryError> {
    debug_assert!(matches!(pair.kind, PairKind::BarycenterObstacle { .. }));
    pair_row(pair, agents, obstacles, a_desired, params).map(|(row, _)| row)
}

fn pair_row(
    pair: &SafetyPair,
    agents: &[AgentState],
    obstacles: &[ObstacleState],
    a_desired: &[f64],
    params: &ScbfParams,
) -> Result<(ConstraintRow, BarrierEval), GeometryError> {
    let enc = encounter_for(pair, agents, obstacles);
    let eval = enc.eval(pair.mode, params)?;
    let mut row = row_from_eval(pair.kind, &eval, agents.len(), a_desired, params);
    if matches!(pair.kind, PairKind::BarycenterObstacle { .. }) {
        // The row holds u_b fixed under heading changes. With the full
        // gradient the filter can lower h2 by spreading headings, which
        // collapses u_b and with it the fleet's control authority.
        for (k, g) in enc.penalty_heading_gains(params) {
            row.coefficients[k] -= g;
        }
        row.active_hint = row.coefficients.iter().any(|c| c.abs() > COEFFICIENT_FLOOR);
    }
    Ok((row, eval))
}

/// Stacks one row per pair, in pair order. Pairs must already be
/// jump-updated for this snapshot. Also returns each pair's evaluation.
pub fn assemble(
    pairs: &[SafetyPair],
    agents: &[AgentState],
    obstacles: &[ObstacleState],
    a_desired: &[f64],
    limits: &[AgentLimits],
    params: &ScbfParams,
) -> Result<(ConstraintSystem, Vec<BarrierEval>), (usize, GeometryError)> {
    let mut system = ConstraintSystem::new(agents.len(), limits.iter().map(|l| l.r_max).collect());
    let mut evals = Vec::with_capacity(pairs.len());
    for (k, pair) in pairs.iter().enumerate() {
        let (row, eval) = pair_row(pair, agents, obstacles, a_desired, params).map_err(|e| (k, e))?;
        system.rows.push(row);
        evals.push(eval);
    }
    Ok((system, evals))
}

/// Constants of the sufficient feasibility condition for one pair family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityParams {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub gamma: f64,
    pub u_omax: f64,
    pub a_omax: f64,
}

impl FeasibilityParams {
    pub fn new(limits: &AgentLimits, d_min: f64, gamma: f64, u_omax: f64, a_omax: f64) -> Self {
        let beta1 = limits.r_max;
        let beta2 = 2.0 * (limits.u_max + u_omax) / d_min + limits.a_max / limits.u_min;
        let beta3 = (a_omax + limits.a_max) / limits.u_min
            + gamma * (u_omax + limits.u_min) / limits.u_min;
        Self {
            beta1,
            beta2,
            beta3,
            gamma,
            u_omax,
            a_omax,
        }
    }

    /// `4β1 sin²ϑ - (√5 β1 + β2) sin ϑ - β3`.
    pub fn margin_at(&self, vartheta: f64) -> f64 {
        let s = math::sin(vartheta);
        4.0 * self.beta1 * s * s - (math::sqrt(5.0) * self.beta1 + self.beta2) * s - self.beta3
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    pub params: FeasibilityParams,
    pub margin: f64,
    pub argmax_vartheta: f64,
}

impl FeasibilityReport {
    /// A positive margin certifies forward invariance; a negative one is
    /// inconclusive.
    pub fn certified(&self) -> bool {
        self.margin > 0.0
    }
}

/// Default number of interior grid points on `(0, π/2)`.
pub const VARTHETA_GRID: usize = 10_000;

/// Maximizes the margin over `points` interior ϑ values at fixed γ.
pub fn feasibility_margin(params: FeasibilityParams, points: usize) -> FeasibilityReport {
    let points = points.max(1);
    let step = core::f64::consts::FRAC_PI_2 / (points + 1) as f64;
    let (margin, argmax_vartheta) = (1..=points)
        .map(|k| {
            let th = step * k as f64;
            (params.margin_at(th), th)
        })
        .fold((f64::NEG_INFINITY, 0.0), |best, cur| if cur.0 > best.0 { cur } else { best });
    FeasibilityReport {
        params,
        margin,
        argmax_vartheta,
    }
}

/// Joint sweep over ϑ and the supplied γ values.
pub fn feasibility_sweep(
    limits: &AgentLimits,
    d_min: f64,
    gammas: &[f64],
    u_omax: f64,
    a_omax: f64,
    points: usize,
) -> Option<FeasibilityReport> {
    gammas
        .iter()
        .map(|&g| feasibility_margin(FeasibilityParams::new(limits, d_min, g, u_omax, a_omax), points))
        .fold(None, |best: Option<FeasibilityReport>, cur| match best {
            Some(b) if b.margin >= cur.margin => Some(b),
            _ => Some(cur),
        })
}
