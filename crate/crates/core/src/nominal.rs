//! Nominal formation path-following along the inertial x-axis: a saturated
//! line-of-sight cross-track law plus proportional formation keeping.

use alloc::vec::Vec;

use crate::dynamics::{AgentLimits, AgentState};
use crate::error::ConfigError;
use crate::math::{self, wrap_angle, Vec2};

/// Desired formation slots relative to the barycenter; they sum to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationSpec {
    pub offsets: Vec<Vec2>,
}

impl FormationSpec {
    pub fn new(offsets: Vec<Vec2>) -> Self {
        Self { offsets }
    }

    pub fn validate(&self, path: &str) -> Result<(), ConfigError> {
        if self.offsets.is_empty() {
            return Err(ConfigError::new(path, "at least one offset is required"));
        }
        if let Some(i) = self.offsets.iter().position(|o| !o.is_finite()) {
            return Err(ConfigError::new(alloc::format!("{path}[{i}]"), "must be finite"));
        }
        let sum = self.offsets.iter().fold(Vec2::ZERO, |acc, &o| acc + o);
        let scale = self.offsets.iter().map(|o| o.norm()).fold(1.0, f64::max);
        if sum.norm() > 1e-9 * scale {
            return Err(ConfigError::new(
                path,
                alloc::format!("offsets must sum to zero, got {sum}"),
            ));
        }
        Ok(())
    }

    /// Largest slot distance from the barycenter.
    pub fn radius(&self) -> f64 {
        self.offsets.iter().map(|o| o.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalGains {
    /// Cross-track gain, 1/s.
    pub k_path: f64,
    /// Formation gain, 1/s.
    pub k_form: f64,
    /// Heading gain, 1/s.
    pub k_psi: f64,
    /// Speed gain, 1/s.
    pub k_u: f64,
    /// Cruise speed, m/s.
    pub u_ref: f64,
    /// Cross-track saturation length, m.
    pub lookahead: f64,
}

impl Default for NominalGains {
    fn default() -> Self {
        Self {
            k_path: 0.05,
            k_form: 0.05,
            k_psi: 1.0,
            k_u: 0.5,
            u_ref: 0.5,
            lookahead: 10.0,
        }
    }
}

impl NominalGains {
    pub fn validate(&self, path: &str, limits: &[AgentLimits]) -> Result<(), ConfigError> {
        let fields = [
            ("k_path", self.k_path),
            ("k_form", self.k_form),
            ("k_psi", self.k_psi),
            ("k_u", self.k_u),
            ("u_ref", self.u_ref),
            ("lookahead", self.lookahead),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::new(alloc::format!("{path}.{name}"), "must be positive"));
            }
        }
        for (i, lim) in limits.iter().enumerate() {
            if !(self.u_ref > lim.u_min && self.u_ref < lim.u_max) {
                return Err(ConfigError::new(
                    alloc::format!("{path}.u_ref"),
                    alloc::format!(
                        "must lie strictly inside agent {i}'s speed range ({}, {})",
                        lim.u_min, lim.u_max
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Path-following and formation errors.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskErrors {
    /// Barycenter cross-track error (its y-coordinate), m.
    pub y_b: f64,
    /// `(p_i - p_b) - offset_i` per agent, m.
    pub sigma_err: Vec<Vec2>,
}

impl TaskErrors {
    /// `Σ ‖σ̃_i‖`.
    pub fn formation_error_sum(&self) -> f64 {
        self.sigma_err.iter().map(|e| e.norm()).sum()
    }
}

pub fn task_errors(states: &[AgentState], spec: &FormationSpec) -> TaskErrors {
    let n = states.len().max(1) as f64;
    let p_b = states.iter().fold(Vec2::ZERO, |acc, s| acc + s.position()) / n;
    TaskErrors {
        y_b: p_b.y,
        sigma_err: states
            .iter()
            .zip(&spec.offsets)
            .map(|(s, &o)| s.position() - p_b - o)
            .collect(),
    }
}

/// Desired `(r_d, a_d)` for one agent, already inside its actuation box.
pub fn nominal_command(
    state: &AgentState,
    y_b: f64,
    sigma_err: Vec2,
    gains: &NominalGains,
    limits: &AgentLimits,
) -> (f64, f64) {
    let lateral = -gains.k_path * y_b * gains.lookahead
        / math::sqrt(gains.lookahead * gains.lookahead + y_b * y_b);
    let v_des = Vec2::new(gains.u_ref, lateral) - sigma_err * gains.k_form;
    let psi_des = v_des.angle();
    let r_d = (gains.k_psi * wrap_angle(psi_des - state.psi).radians()).clamp(-limits.r_max, limits.r_max);
    let speed = limits.clamp_speed(v_des.norm());
    let a_d = (gains.k_u * (speed - state.u)).clamp(-limits.a_max, limits.a_max);
    (r_d, a_d)
}
