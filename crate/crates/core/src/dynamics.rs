//! Unicycle agents with positive speed, scripted obstacles, and RK4 flow.

use alloc::vec::Vec;

use crate::error::{ConfigError, ScriptError};
use crate::math::{self, wrap_angle, Vec2};

/// Pose and forward speed of one agent. `psi` is kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub u: f64,
}

impl AgentState {
    pub fn new(x: f64, y: f64, psi: f64, u: f64) -> Self {
        Self {
            x,
            y,
            psi: wrap_angle(psi).radians(),
            u,
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Unit vector along the heading.
    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.psi)
    }

    pub fn velocity(&self) -> Vec2 {
        self.heading() * self.u
    }

    fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.psi, self.u]
    }
}

/// Heading rate `r` (rad/s) and acceleration `a` (m/s²).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentInput {
    pub r: f64,
    pub a: f64,
}

impl AgentInput {
    pub const fn new(r: f64, a: f64) -> Self {
        Self { r, a }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentLimits {
    pub r_max: f64,
    pub a_max: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for AgentLimits {
    fn default() -> Self {
        Self {
            r_max: 0.5,
            a_max: 0.25,
            u_min: 0.3,
            u_max: 0.8,
        }
    }
}

impl AgentLimits {
    /// Checks the limit invariants; `path` prefixes the reported field.
    pub fn validate(&self, path: &str) -> Result<(), ConfigError> {
        let field = |name: &str| alloc::format!("{path}.{name}");
        let finite = [
            ("r_max", self.r_max),
            ("a_max", self.a_max),
            ("u_min", self.u_min),
            ("u_max", self.u_max),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(ConfigError::new(field(name), "must be finite"));
            }
        }
        if self.r_max <= 0.0 {
            return Err(ConfigError::new(field("r_max"), "must be positive"));
        }
        if self.a_max < 0.0 {
            return Err(ConfigError::new(field("a_max"), "must be nonnegative"));
        }
        if self.u_min <= 0.0 {
            return Err(ConfigError::new(
                field("u_min"),
                "must be positive (agents cannot stop or reverse)",
            ));
        }
        if self.u_max < self.u_min {
            return Err(ConfigError::new(field("u_max"), "must be at least u_min"));
        }
        Ok(())
    }

    pub fn clamp_speed(&self, u: f64) -> f64 {
        u.clamp(self.u_min, self.u_max)
    }

    pub fn clamp_input(&self, input: AgentInput) -> AgentInput {
        AgentInput {
            r: input.r.clamp(-self.r_max, self.r_max),
            a: input.a.clamp(-self.a_max, self.a_max),
        }
    }
}

/// Time derivative `(u cos ψ, u sin ψ, r, a)` of the agent state.
pub fn agent_derivative(s: &AgentState, input: AgentInput) -> [f64; 4] {
    derivative(&s.to_array(), input)
}

fn derivative(x: &[f64; 4], input: AgentInput) -> [f64; 4] {
    [
        x[3] * math::cos(x[2]),
        x[3] * math::sin(x[2]),
        input.r,
        input.a,
    ]
}

fn axpy(x: &[f64; 4], h: f64, k: &[f64; 4]) -> [f64; 4] {
    [
        x[0] + h * k[0],
        x[1] + h * k[1],
        x[2] + h * k[2],
        x[3] + h * k[3],
    ]
}

/// One classical RK4 step under a held input, then heading wrap and speed clamp.
pub fn step_agent(s: &AgentState, input: AgentInput, dt: f64, lim: &AgentLimits) -> AgentState {
    let x = s.to_array();
    let k1 = derivative(&x, input);
    let k2 = derivative(&axpy(&x, 0.5 * dt, &k1), input);
    let k3 = derivative(&axpy(&x, 0.5 * dt, &k2), input);
    let k4 = derivative(&axpy(&x, dt, &k3), input);
    let mut next = [0.0; 4];
    for i in 0..4 {
        next[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    AgentState {
        x: next[0],
        y: next[1],
        psi: wrap_angle(next[2]).radians(),
        u: lim.clamp_speed(next[3]),
    }
}

/// Position, velocity and acceleration of an obstacle at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObstacleState {
    pub p: Vec2,
    pub v: Vec2,
    pub a: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptSegment {
    pub t_start: f64,
    pub velocity: Vec2,
}

/// Piecewise-constant-velocity obstacle motion. The script starts at the
/// first segment's `t_start` from `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleScript {
    pub start: Vec2,
    pub segments: Vec<ScriptSegment>,
}

impl ObstacleScript {
    pub fn constant_velocity(start: Vec2, velocity: Vec2) -> Self {
        Self {
            start,
            segments: alloc::vec![ScriptSegment {
                t_start: 0.0,
                velocity,
            }],
        }
    }

    pub fn validate(&self) -> Result<(), ScriptError> {
        if self.segments.is_empty() {
            return Err(ScriptError::Empty);
        }
        if !self.start.is_finite() {
            return Err(ScriptError::NonFinite { index: 0 });
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if !seg.t_start.is_finite() || !seg.velocity.is_finite() {
                return Err(ScriptError::NonFinite { index: i });
            }
            if i > 0 && seg.t_start <= self.segments[i - 1].t_start {
                return Err(ScriptError::Unordered { index: i });
            }
        }
        Ok(())
    }

    pub fn start_time(&self) -> f64 {
        self.segments.first().map_or(0.0, |s| s.t_start)
    }

    /// Largest segment speed.
    pub fn max_speed(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.velocity.norm())
            .fold(0.0, f64::max)
    }
}

/// Exact state of a scripted obstacle at time `t`.
///
/// Segment switches are instantaneous velocity changes; the reported
/// acceleration is zero everywhere.
pub fn obstacle_at(script: &ObstacleScript, t: f64) -> Result<ObstacleState, ScriptError> {
    script.validate()?;
    let start = script.start_time();
    if t < start {
        return Err(ScriptError::BeforeStart { t, start });
    }
    let mut p = script.start;
    let mut v = script.segments[0].velocity;
    for (i, seg) in script.segments.iter().enumerate() {
        if seg.t_start > t {
            break;
        }
        let end = script
            .segments
            .get(i + 1)
            .map_or(t, |next| next.t_start.min(t));
        p += seg.velocity * (end - seg.t_start);
        v = seg.velocity;
    }
    Ok(ObstacleState {
        p,
        v,
        a: Vec2::ZERO,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn derivative_examples() {
        let d = agent_derivative(&AgentState::new(0.0, 0.0, 0.0, 1.0), AgentInput::new(0.0, 0.0));
        assert_eq!(d, [1.0, 0.0, 0.0, 0.0]);

        let d = agent_derivative(
            &AgentState::new(0.0, 0.0, FRAC_PI_2, 2.0),
            AgentInput::new(0.1, -0.2),
        );
        assert!(close(d[0], 0.0, 1e-15) && close(d[1], 2.0, 1e-15));
        assert_eq!((d[2], d[3]), (0.1, -0.2));

        let d = agent_derivative(
            &AgentState::new(5.0, -3.0, FRAC_PI_4, 0.5),
            AgentInput::new(0.5, 0.25),
        );
        assert!(close(d[0], 0.5 * SQRT_2 / 2.0, 1e-15));
        assert!(close(d[1], 0.5 * SQRT_2 / 2.0, 1e-15));
        assert_eq!((d[2], d[3]), (0.5, 0.25));
    }

    #[test]
    fn straight_line_step_is_exact() {
        let lim = AgentLimits {
            u_min: 0.3,
            u_max: 2.0,
            ..AgentLimits::default()
        };
        let s = step_agent(&AgentState::new(0.0, 0.0, 0.0, 1.0), AgentInput::default(), 1.0, &lim);
        assert_eq!(s, AgentState::new(1.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn speed_clamped_at_minimum() {
        let lim = AgentLimits::default();
        let s = step_agent(
            &AgentState::new(0.0, 0.0, 0.0, 0.3),
            AgentInput::new(0.0, -0.25),
            1.0,
            &lim,
        );
        assert_eq!(s.u, 0.3);
    }

    #[test]
    fn circular_arc_converges() {
        // Radius u/r = 2/π; after time T the closed form is
        // (R sin(rT), R (1 - cos(rT))).
        let lim = AgentLimits {
            r_max: 2.0,
            ..AgentLimits::default()
        };
        let input = AgentInput::new(FRAC_PI_2, 0.0);
        let u = 1.0;
        let lim = AgentLimits { u_max: 1.0, ..lim };
        let dt = 1e-4;
        let steps = 10_000;
        let mut s = AgentState::new(0.0, 0.0, 0.0, u);
        for _ in 0..steps {
            s = step_agent(&s, input, dt, &lim);
        }
        let t = dt * steps as f64;
        let radius = 2.0 / PI;
        let ex = radius * (FRAC_PI_2 * t).sin();
        let ey = radius * (1.0 - (FRAC_PI_2 * t).cos());
        assert!(close(s.x, ex, 1e-10) && close(s.y, ey, 1e-10));
    }

    #[test]
    fn constant_velocity_obstacle() {
        let script = ObstacleScript::constant_velocity(Vec2::new(100.0, 0.0), Vec2::new(-0.5, 0.0));
        let s = obstacle_at(&script, 10.0).unwrap();
        assert_eq!(s.p, Vec2::new(95.0, 0.0));
        assert_eq!(s.v, Vec2::new(-0.5, 0.0));
        assert_eq!(obstacle_at(&script, 0.0).unwrap().p, Vec2::new(100.0, 0.0));
    }

    #[test]
    fn two_segment_script_is_continuous() {
        let script = ObstacleScript {
            start: Vec2::new(0.0, 0.0),
            segments: alloc::vec![
                ScriptSegment {
                    t_start: 0.0,
                    velocity: Vec2::new(0.2, 0.0),
                },
                ScriptSegment {
                    t_start: 50.0,
                    velocity: Vec2::new(0.0, -0.3),
                },
            ],
        };
        let eps = 1e-9;
        let before = obstacle_at(&script, 50.0 - eps).unwrap().p;
        let after = obstacle_at(&script, 50.0 + eps).unwrap().p;
        assert!((after - before).norm() < 1e-9);
        let at = obstacle_at(&script, 50.0).unwrap();
        assert!((at.p - Vec2::new(10.0, 0.0)).norm() < 1e-12);
        assert_eq!(at.v, Vec2::new(0.0, -0.3));
        assert_eq!(obstacle_at(&script, 60.0).unwrap().p, Vec2::new(10.0, -3.0));
    }

    #[test]
    fn script_rejects_time_before_start() {
        let script = ObstacleScript {
            start: Vec2::ZERO,
            segments: alloc::vec![ScriptSegment {
                t_start: 5.0,
                velocity: Vec2::ZERO,
            }],
        };
        assert!(matches!(
            obstacle_at(&script, 1.0),
            Err(ScriptError::BeforeStart { .. })
        ));
    }

    #[test]
    fn limits_validation_names_field() {
        let lim = AgentLimits {
            r_max: -1.0,
            ..AgentLimits::default()
        };
        let err = lim.validate("agents[0].limits").unwrap_err();
        assert_eq!(err.field, "agents[0].limits.r_max");
    }
}
