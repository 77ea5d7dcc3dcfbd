//! Synergistic control barrier functions for positive-speed unicycles.
//!
//! Every barrier relationship (agent–obstacle, agent–agent, formation
//! barycenter–obstacle) is reduced to an [`Encounter`]: a reference point
//! moving with velocity `v_ref` and a partner at relative position
//! `rel = p_partner - p_ref`. With `h0 = d_min² - d²` (nonpositive is safe),
//!
//! ```text
//! h1    = 2 relᵀ (v_ref - v_partner) + α0(h0)
//! h2(q) = 2 relᵀ R(qϑ) v_ref - 2 relᵀ v_partner + α0(h0) + 4 d u_ref sin ϑ
//! ```
//!
//! where `q ∈ {-1, +1}` is the discrete mode. The heading-rate coefficient of
//! `ḣ2` vanishes at `ψ = bearing(rel) - qϑ`; the mode is flipped by a
//! hysteresis rule before the flow can reach those orientations.

use alloc::vec::Vec;
use core::fmt;

use crate::dynamics::{AgentState, ObstacleState};
use crate::error::GeometryError;
use crate::math::{self, rot, Vec2};

/// Heading-rate coefficient magnitude below which a row is reported as
/// near-critical.
pub const COEFFICIENT_FLOOR: f64 = 1e-10;

/// Mode differences below this are ties.
pub const MODE_TIE: f64 = 1e-12;

/// Extended class-K function used in the barrier inequalities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassK {
    Linear { gain: f64 },
}

impl ClassK {
    pub const fn linear(gain: f64) -> Self {
        ClassK::Linear { gain }
    }

    pub fn eval(&self, h: f64) -> f64 {
        match *self {
            ClassK::Linear { gain } => gain * h,
        }
    }

    pub fn slope(&self, _h: f64) -> f64 {
        match *self {
            ClassK::Linear { gain } => gain,
        }
    }

    pub fn gain(&self) -> f64 {
        match *self {
            ClassK::Linear { gain } => gain,
        }
    }
}

/// How the hysteresis width `δ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HysteresisRule {
    /// `δ = factor · u · d · (1 - cos 2ϑ)`. Any factor in `(0, 2)` keeps
    /// `δ` strictly below the synergy gap bound `2 u d (1 - cos 2ϑ)`.
    Product { factor: f64 },
    /// Fixed width in m²/s. Only valid while it stays below the gap bound.
    Constant { width: f64 },
}

impl Default for HysteresisRule {
    fn default() -> Self {
        HysteresisRule::Product { factor: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScbfParams {
    /// Rotation shift ϑ, strictly inside `(0, π/2)`.
    pub vartheta: f64,
    pub alpha0: ClassK,
    pub alpha2: ClassK,
    pub hysteresis: HysteresisRule,
    /// Radius of the ball around each partner where barriers are undefined.
    pub excluded_radius: f64,
}

impl Default for ScbfParams {
    fn default() -> Self {
        Self {
            vartheta: core::f64::consts::FRAC_PI_4,
            alpha0: ClassK::linear(1.0),
            alpha2: ClassK::linear(0.1),
            hysteresis: HysteresisRule::default(),
            excluded_radius: 0.1,
        }
    }
}

impl ScbfParams {
    pub fn validate(&self, path: &str) -> Result<(), crate::error::ConfigError> {
        use crate::error::ConfigError;
        let field = |name: &str| alloc::format!("{path}.{name}");
        if !(self.vartheta > 0.0 && self.vartheta < core::f64::consts::FRAC_PI_2) {
            return Err(ConfigError::new(field("vartheta"), "must lie in (0, π/2)"));
        }
        if !(self.alpha0.gain() > 0.0 && self.alpha0.gain().is_finite()) {
            return Err(ConfigError::new(field("gamma0"), "must be positive"));
        }
        if !(self.alpha2.gain() > 0.0 && self.alpha2.gain().is_finite()) {
            return Err(ConfigError::new(field("gamma2"), "must be positive"));
        }
        match self.hysteresis {
            HysteresisRule::Product { factor } if !(factor > 0.0 && factor < 2.0) => {
                return Err(ConfigError::new(
                    field("hysteresis.factor"),
                    "must lie in (0, 2) so that the width stays below the synergy gap",
                ))
            }
            HysteresisRule::Constant { width } if !(width > 0.0 && width.is_finite()) => {
                return Err(ConfigError::new(field("hysteresis.width"), "must be positive"))
            }
            _ => {}
        }
        if !(self.excluded_radius > 0.0 && self.excluded_radius.is_finite()) {
            return Err(ConfigError::new(field("excluded_radius"), "must be positive"));
        }
        Ok(())
    }
}

/// Discrete mode `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Negative,
    Positive,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Positive, Mode::Negative];

    pub fn sign(self) -> f64 {
        match self {
            Mode::Positive => 1.0,
            Mode::Negative => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Mode::Positive => 1,
            Mode::Negative => -1,
        }
    }

    pub fn from_sign(q: i8) -> Option<Mode> {
        match q {
            1 => Some(Mode::Positive),
            -1 => Some(Mode::Negative),
            _ => None,
        }
    }

    pub fn flipped(self) -> Mode {
        match self {
            Mode::Positive => Mode::Negative,
            Mode::Negative => Mode::Positive,
        }
    }
}

/// Which two bodies a barrier relates. Agent and obstacle indices are
/// separate zero-based sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairKind {
    AgentObstacle { agent: usize, obstacle: usize },
    /// Always stored with `i < j`.
    AgentAgent { i: usize, j: usize },
    BarycenterObstacle { obstacle: usize },
}

impl fmt::Display for PairKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairKind::AgentObstacle { agent, obstacle } => write!(f, "a{agent}-o{obstacle}"),
            PairKind::AgentAgent { i, j } => write!(f, "a{i}-a{j}"),
            PairKind::BarycenterObstacle { obstacle } => write!(f, "b-o{obstacle}"),
        }
    }
}

/// Nonincreasing safety distance used while an obstacle is near the
/// formation; re-armed from the raw value whenever the encounter ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceLatch {
    pub value: f64,
    pub active: bool,
}

/// One barrier relationship with its discrete mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyPair {
    pub kind: PairKind,
    /// Safety distance. For the barycenter variant this is the largest
    /// per-agent distance to the obstacle; the effective value lives in `latch`.
    pub d_min: f64,
    pub mode: Mode,
    pub latch: Option<DistanceLatch>,
}

/// A discrete transition of one pair's mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub from: Mode,
    pub to: Mode,
    pub h2_before: f64,
    pub h2_after: f64,
    pub delta: f64,
}

impl SafetyPair {
    pub fn new(kind: PairKind, d_min: f64) -> Self {
        let latch = match kind {
            PairKind::BarycenterObstacle { .. } => Some(DistanceLatch {
                value: d_min,
                active: false,
            }),
            _ => None,
        };
        Self {
            kind,
            d_min,
            mode: Mode::Positive,
            latch,
        }
    }

    /// Distance bound actually used in `h0`.
    pub fn effective_d_min(&self) -> f64 {
        self.latch.map_or(self.d_min, |l| l.value)
    }

    /// Applies the jump map if `(x, q)` lies in the jump set
    /// `h2(x, q) - m2(x) ≥ δ(x)`. At most one jump per call.
    pub fn jump_update(
        &mut self,
        enc: &Encounter,
        params: &ScbfParams,
    ) -> Result<Option<Jump>, GeometryError> {
        enc.check(params)?;
        let h2 = enc.h2(self.mode, params);
        let (m2, argmin) = enc.min_mode(self.mode, params);
        let delta = enc.hysteresis_width(params);
        if h2 - m2 >= delta && argmin != self.mode {
            let from = self.mode;
            self.mode = argmin;
            Ok(Some(Jump {
                from,
                to: argmin,
                h2_before: h2,
                h2_after: m2,
                delta,
            }))
        } else {
            Ok(None)
        }
    }

    /// Updates the barycenter safety distance from its raw value. The latch
    /// only binds while the obstacle is within `2 · raw` of the barycenter.
    pub fn latch_d_bj_min(&mut self, raw: f64, obstacle_distance: f64) -> f64 {
        let active_now = obstacle_distance <= 2.0 * raw;
        let latch = self.latch.get_or_insert(DistanceLatch {
            value: raw,
            active: false,
        });
        latch.value = match (latch.active, active_now) {
            (true, true) => latch.value.min(raw),
            _ => raw,
        };
        latch.active = active_now;
        latch.value
    }
}

/// Heading-rate and acceleration coefficients of `ḣ2` for one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputGain {
    pub agent: usize,
    /// `(L_g h2)_1`, multiplies the heading rate.
    pub r: f64,
    /// `(L_g h2)_2`, multiplies the acceleration.
    pub a: f64,
}

/// Barrier values and Lie derivatives at one state and mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval {
    pub mode: Mode,
    pub h0: f64,
    pub h1: f64,
    pub h2: f64,
    /// Drift term `L_f h2`, including the obstacle's own acceleration.
    pub lf: f64,
    /// One entry per agent whose inputs enter `ḣ2`.
    pub gains: Vec<InputGain>,
    /// `h2(x, q) - min_q h2(x, q)`.
    pub headroom: f64,
    pub distance: f64,
    /// Speed of the reference point (agent speed or barycenter speed).
    pub speed: f64,
}

impl BarrierEval {
    pub fn gain(&self, agent: usize) -> Option<InputGain> {
        self.gains.iter().copied().find(|g| g.agent == agent)
    }

    /// `ḣ2` under the given per-agent inputs (indexed by agent).
    pub fn h2_dot(&self, r: &[f64], a: &[f64]) -> f64 {
        self.lf
            + self
                .gains
                .iter()
                .map(|g| g.r * r[g.agent] + g.a * a[g.agent])
                .sum::<f64>()
    }
}

/// How one agent's heading rate and acceleration move a velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Sensitivity {
    agent: usize,
    dv_dr: Vec2,
    dv_da: Vec2,
}

impl Sensitivity {
    fn of_agent(agent: usize, s: &AgentState, weight: f64) -> Self {
        Self {
            agent,
            dv_dr: s.velocity().perp() * weight,
            dv_da: s.heading() * weight,
        }
    }
}

/// Instantaneous geometry of one barrier relationship.
#[derive(Debug, Clone, PartialEq)]
pub struct Encounter {
    p_ref: Vec2,
    rel: Vec2,
    v_ref: Vec2,
    v_partner: Vec2,
    a_partner: Vec2,
    d_min: f64,
    ref_inputs: Vec<Sensitivity>,
    partner_inputs: Vec<Sensitivity>,
    barycentric: bool,
}

impl Encounter {
    pub fn agent_obstacle(agent: usize, s: &AgentState, obstacle: &ObstacleState, d_min: f64) -> Self {
        Self {
            p_ref: s.position(),
            rel: obstacle.p - s.position(),
            v_ref: s.velocity(),
            v_partner: obstacle.v,
            a_partner: obstacle.a,
            d_min,
            ref_inputs: alloc::vec![Sensitivity::of_agent(agent, s, 1.0)],
            partner_inputs: Vec::new(),
            barycentric: false,
        }
    }

    /// Agent `i` carries the mode rotation; agent `j` is the partner.
    pub fn agent_agent(i: usize, si: &AgentState, j: usize, sj: &AgentState, d_min: f64) -> Self {
        Self {
            p_ref: si.position(),
            rel: sj.position() - si.position(),
            v_ref: si.velocity(),
            v_partner: sj.velocity(),
            a_partner: Vec2::ZERO,
            d_min,
            ref_inputs: alloc::vec![Sensitivity::of_agent(i, si, 1.0)],
            partner_inputs: alloc::vec![Sensitivity::of_agent(j, sj, 1.0)],
            barycentric: false,
        }
    }

    /// The formation barycenter against an obstacle. Every agent's inputs
    /// enter through the barycenter velocity with weight `1/n`.
    pub fn barycenter(agents: &[AgentState], obstacle: &ObstacleState, d_min: f64) -> Self {
        let n = agents.len().max(1) as f64;
        let p_b = agents.iter().fold(Vec2::ZERO, |acc, s| acc + s.position()) / n;
        let v_b = agents.iter().fold(Vec2::ZERO, |acc, s| acc + s.velocity()) / n;
        Self {
            p_ref: p_b,
            rel: obstacle.p - p_b,
            v_ref: v_b,
            v_partner: obstacle.v,
            a_partner: obstacle.a,
            d_min,
            ref_inputs: agents
                .iter()
                .enumerate()
                .map(|(k, s)| Sensitivity::of_agent(k, s, 1.0 / n))
                .collect(),
            partner_inputs: Vec::new(),
            barycentric: true,
        }
    }

    pub fn reference_position(&self) -> Vec2 {
        self.p_ref
    }

    pub fn partner_position(&self) -> Vec2 {
        self.p_ref + self.rel
    }

    pub fn relative_position(&self) -> Vec2 {
        self.rel
    }

    pub fn distance(&self) -> f64 {
        self.rel.norm()
    }

    /// `u_i` for agent pairs, `u_b` for the barycenter.
    pub fn speed(&self) -> f64 {
        self.v_ref.norm()
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    /// Rejects states in the excluded ball or with a stationary barycenter.
    pub fn check(&self, params: &ScbfParams) -> Result<(), GeometryError> {
        let d = self.distance();
        if !(d >= params.excluded_radius) {
            return Err(GeometryError::InsideExcludedBall {
                distance: d,
                radius: params.excluded_radius,
            });
        }
        if self.barycentric && self.speed() == 0.0 {
            return Err(GeometryError::StationaryBarycenter);
        }
        Ok(())
    }

    pub fn h0(&self) -> f64 {
        self.d_min * self.d_min - self.rel.norm_sq()
    }

    /// `ḣ0 = 2 relᵀ (v_ref - v_partner)`; positive while closing in.
    pub fn h0_dot(&self) -> f64 {
        2.0 * self.rel.dot(self.v_ref - self.v_partner)
    }

    pub fn h1(&self, params: &ScbfParams) -> f64 {
        self.h0_dot() + params.alpha0.eval(self.h0())
    }

    pub fn h2(&self, mode: Mode, params: &ScbfParams) -> f64 {
        let rotated = rot(mode.sign() * params.vartheta).apply(self.v_ref);
        2.0 * self.rel.dot(rotated) - 2.0 * self.rel.dot(self.v_partner)
            + params.alpha0.eval(self.h0())
            + self.penalty(params)
    }

    /// `ε = 4 d u sin ϑ`.
    pub fn penalty(&self, params: &ScbfParams) -> f64 {
        4.0 * self.distance() * self.speed() * math::sin(params.vartheta)
    }

    /// `m2 = min_q h2` and its argmin. Ties keep `current`.
    pub fn min_mode(&self, current: Mode, params: &ScbfParams) -> (f64, Mode) {
        let here = self.h2(current, params);
        let there = self.h2(current.flipped(), params);
        if (here - there).abs() < MODE_TIE || here <= there {
            (here, current)
        } else {
            (there, current.flipped())
        }
    }

    /// Mode to start from: the argmin, ties resolved to `+1`.
    pub fn initial_mode(&self, params: &ScbfParams) -> Mode {
        self.min_mode(Mode::Positive, params).1
    }

    pub fn synergy_gap_lower_bound(&self, params: &ScbfParams) -> f64 {
        synergy_gap_lower_bound(self.speed(), self.distance(), params)
    }

    pub fn hysteresis_width(&self, params: &ScbfParams) -> f64 {
        hysteresis_width(self.speed(), self.distance(), params)
    }

    /// Part of each reference agent's heading-rate gain that comes from the
    /// penalty's dependence on `u_ref`. Nonzero only for the barycenter when
    /// agent velocities are not parallel.
    pub fn penalty_heading_gains(&self, params: &ScbfParams) -> Vec<(usize, f64)> {
        let (d, u) = (self.distance(), self.speed());
        let s = math::sin(params.vartheta);
        self.ref_inputs
            .iter()
            .map(|sens| {
                let g = if u > 0.0 { 4.0 * s * d * self.v_ref.dot(sens.dv_dr) / u } else { 0.0 };
                (sens.agent, g)
            })
            .collect()
    }

    /// Full evaluation of the barrier and its Lie derivatives at `mode`.
    pub fn eval(&self, mode: Mode, params: &ScbfParams) -> Result<BarrierEval, GeometryError> {
        self.check(params)?;
        let d = self.distance();
        let u = self.speed();
        let s = math::sin(params.vartheta);
        let r = rot(mode.sign() * params.vartheta);
        let h0 = self.h0();
        let h2 = self.h2(mode, params);
        let (m2, _) = self.min_mode(mode, params);

        let rel_dot = self.v_partner - self.v_ref;
        let rel_rate = self.rel.dot(rel_dot);
        let penalty_rate = if u > 0.0 { 4.0 * s * u * rel_rate / d } else { 0.0 };
        let lf = 2.0 * rel_dot.dot(r.apply(self.v_ref))
            - 2.0 * rel_dot.dot(self.v_partner)
            - 2.0 * self.rel.dot(self.a_partner)
            - 2.0 * params.alpha0.slope(h0) * rel_rate
            + penalty_rate;

        // d/dt of the penalty through u_ref = |v_ref|.
        let speed_coeff = |dv: Vec2| {
            if u > 0.0 {
                4.0 * s * d * self.v_ref.dot(dv) / u
            } else {
                0.0
            }
        };
        let mut gains: Vec<InputGain> = self
            .ref_inputs
            .iter()
            .map(|sens| InputGain {
                agent: sens.agent,
                r: 2.0 * self.rel.dot(r.apply(sens.dv_dr)) + speed_coeff(sens.dv_dr),
                a: 2.0 * self.rel.dot(r.apply(sens.dv_da)) + speed_coeff(sens.dv_da),
            })
            .collect();
        gains.extend(self.partner_inputs.iter().map(|sens| InputGain {
            agent: sens.agent,
            r: -2.0 * self.rel.dot(sens.dv_dr),
            a: -2.0 * self.rel.dot(sens.dv_da),
        }));

        Ok(BarrierEval {
            mode,
            h0,
            h1: self.h1(params),
            h2,
            lf,
            gains,
            headroom: (h2 - m2).max(0.0),
            distance: d,
            speed: u,
        })
    }

    /// Reference heading lies near `bearing ∓ ϑ + π` (pointing away) while
    /// the partner closes in faster than the reference moves. Heading-rate
    /// control alone cannot resolve this configuration.
    pub fn reversed_critical(&self, mode: Mode, params: &ScbfParams) -> bool {
        let u = self.speed();
        let d = self.distance();
        if u == 0.0 || d == 0.0 {
            return false;
        }
        let shifted = rot(mode.sign() * params.vartheta).apply(self.v_ref) / u;
        let n = self.rel / d;
        let misalignment = n.cross(shifted).abs();
        let pointing_away = n.dot(shifted) < 0.0;
        let closing_speed = -(self.v_partner.dot(n));
        misalignment < 0.05 && pointing_away && closing_speed > u
    }
}

/// `h0 = d_min² - ‖p_j - p_i‖²`.
pub fn h0_pair(p_i: Vec2, p_j: Vec2, d_min: f64) -> f64 {
    d_min * d_min - (p_j - p_i).norm_sq()
}

/// Closed-form synergy gap bound `2 u d (1 - cos 2ϑ)`.
pub fn synergy_gap_lower_bound(u: f64, d: f64, params: &ScbfParams) -> f64 {
    2.0 * u * d * (1.0 - math::cos(2.0 * params.vartheta))
}

/// Hysteresis width `δ` at speed `u` and distance `d`.
pub fn hysteresis_width(u: f64, d: f64, params: &ScbfParams) -> f64 {
    match params.hysteresis {
        HysteresisRule::Product { factor } => {
            factor * u * d * (1.0 - math::cos(2.0 * params.vartheta))
        }
        HysteresisRule::Constant { width } => width,
    }
}

/// Barycenter quantities shared by every barycenter–obstacle barrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycenterGeometry {
    pub p_b: Vec2,
    pub v_b: Vec2,
    pub u_b: f64,
    /// Current formation radius `max_i ‖p_i - p_b‖`.
    pub d_f: f64,
    /// Desired formation radius `max_i ‖offset_i‖`.
    pub d_f_d: f64,
    /// `max_i d_ij_min + max(d_f, d_f_d)` before latching.
    pub d_bj_min_raw: f64,
}

pub fn barycenter_geometry(
    states: &[AgentState],
    offsets: &[Vec2],
    agent_d_min: &[f64],
) -> BarycenterGeometry {
    let n = states.len().max(1) as f64;
    let p_b = states.iter().fold(Vec2::ZERO, |acc, s| acc + s.position()) / n;
    let v_b = states.iter().fold(Vec2::ZERO, |acc, s| acc + s.velocity()) / n;
    let d_f = states
        .iter()
        .map(|s| (s.position() - p_b).norm())
        .fold(0.0, f64::max);
    let d_f_d = offsets.iter().map(|o| o.norm()).fold(0.0, f64::max);
    let d_max = agent_d_min.iter().copied().fold(0.0, f64::max);
    BarycenterGeometry {
        p_b,
        v_b,
        u_b: v_b.norm(),
        d_f,
        d_f_d,
        d_bj_min_raw: d_max + d_f.max(d_f_d),
    }
}
