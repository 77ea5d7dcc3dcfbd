//! Barrier functions over the stacked state of [`crate::fd::StateLayout`],
//! written directly from their definitions.

use crate::fd::StateLayout;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSpec {
    pub d_min: f64,
    /// `+1.0` or `-1.0`.
    pub q: f64,
    pub vartheta: f64,
    pub gamma0: f64,
}

fn agent_pos_vel(layout: &StateLayout, x: &[f64], i: usize) -> ([f64; 2], [f64; 2]) {
    let k = layout.agent(i);
    let (psi, u) = (x[k + 2], x[k + 3]);
    ([x[k], x[k + 1]], [u * psi.cos(), u * psi.sin()])
}

fn obstacle_pos_vel(layout: &StateLayout, x: &[f64], j: usize) -> ([f64; 2], [f64; 2]) {
    let k = layout.obstacle(j);
    ([x[k], x[k + 1]], [x[k + 2], x[k + 3]])
}

/// `2 ρᵀ R(qϑ) v_ref - 2 ρᵀ v_p + γ0 (d_min² - |ρ|²) + 4 |ρ| |v_ref| sin ϑ`
/// with `ρ = p_p - p_ref`.
fn h2_core(p_ref: [f64; 2], v_ref: [f64; 2], p_p: [f64; 2], v_p: [f64; 2], spec: &BarrierSpec) -> f64 {
    let rho = [p_p[0] - p_ref[0], p_p[1] - p_ref[1]];
    let angle = spec.q * spec.vartheta;
    let (c, s) = (angle.cos(), angle.sin());
    let v_rot = [c * v_ref[0] - s * v_ref[1], s * v_ref[0] + c * v_ref[1]];
    let dist = rho[0].hypot(rho[1]);
    let speed = v_ref[0].hypot(v_ref[1]);
    2.0 * (rho[0] * v_rot[0] + rho[1] * v_rot[1]) - 2.0 * (rho[0] * v_p[0] + rho[1] * v_p[1])
        + spec.gamma0 * (spec.d_min * spec.d_min - dist * dist)
        + 4.0 * dist * speed * spec.vartheta.sin()
}

pub fn h0_agent_obstacle(layout: &StateLayout, x: &[f64], i: usize, j: usize, d_min: f64) -> f64 {
    let (p, _) = agent_pos_vel(layout, x, i);
    let (o, _) = obstacle_pos_vel(layout, x, j);
    d_min * d_min - ((o[0] - p[0]).powi(2) + (o[1] - p[1]).powi(2))
}

pub fn h2_agent_obstacle(layout: &StateLayout, x: &[f64], i: usize, j: usize, spec: &BarrierSpec) -> f64 {
    let (p, v) = agent_pos_vel(layout, x, i);
    let (o, vo) = obstacle_pos_vel(layout, x, j);
    h2_core(p, v, o, vo, spec)
}

/// Agent `i` is the reference, agent `j` the partner.
pub fn h2_agent_agent(layout: &StateLayout, x: &[f64], i: usize, j: usize, spec: &BarrierSpec) -> f64 {
    let (p, v) = agent_pos_vel(layout, x, i);
    let (pj, vj) = agent_pos_vel(layout, x, j);
    h2_core(p, v, pj, vj, spec)
}

pub fn h2_barycenter(layout: &StateLayout, x: &[f64], j: usize, spec: &BarrierSpec) -> f64 {
    let n = layout.n_agents as f64;
    let mut p_b = [0.0; 2];
    let mut v_b = [0.0; 2];
    for i in 0..layout.n_agents {
        let (p, v) = agent_pos_vel(layout, x, i);
        for k in 0..2 {
            p_b[k] += p[k] / n;
            v_b[k] += v[k] / n;
        }
    }
    let (o, vo) = obstacle_pos_vel(layout, x, j);
    h2_core(p_b, v_b, o, vo, spec)
}

/// `ḣ0 + γ0 h0` for an agent–obstacle pair.
pub fn h1_agent_obstacle(layout: &StateLayout, x: &[f64], i: usize, j: usize, spec: &BarrierSpec) -> f64 {
    let (p, v) = agent_pos_vel(layout, x, i);
    let (o, vo) = obstacle_pos_vel(layout, x, j);
    let rho = [o[0] - p[0], o[1] - p[1]];
    let h0 = spec.d_min * spec.d_min - (rho[0] * rho[0] + rho[1] * rho[1]);
    let h0_dot = -2.0 * (rho[0] * (vo[0] - v[0]) + rho[1] * (vo[1] - v[1]));
    h0_dot + spec.gamma0 * h0
}
