//! Hybrid closed loop: mode jumps, nominal commands, safety filter, RK4 flow.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::{self, encounter_for, ConstraintMode};
use crate::dynamics::{obstacle_at, step_agent, AgentInput, AgentLimits, AgentState, ObstacleScript, ObstacleState};
use crate::error::{ConfigError, SimError};
use crate::math::Vec2;
use crate::nominal::{nominal_command, task_errors, FormationSpec, NominalGains};
use crate::qp::{self, QpProblem, QpStatus};
use crate::scbf::{barycenter_geometry, Jump, Mode, PairKind, SafetyPair, ScbfParams};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub initial: AgentState,
    pub limits: AgentLimits,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleConfig {
    pub script: ObstacleScript,
    /// Safety distance between this obstacle and every agent, m.
    pub d_min: f64,
}

/// Uniform perturbation of the initial states, driven by the scenario seed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jitter {
    /// Half-width of the position perturbation per axis, m.
    pub position: f64,
    /// Half-width of the heading perturbation, rad.
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub agents: Vec<AgentConfig>,
    pub formation: FormationSpec,
    pub obstacles: Vec<ObstacleConfig>,
    /// Safety distance between any two agents, m.
    pub agent_d_min: f64,
    pub scbf: ScbfParams,
    pub mode: ConstraintMode,
    pub gains: NominalGains,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub jitter: Jitter,
    /// With the filter off the nominal commands are applied unchanged.
    pub filter_enabled: bool,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ConfigError::new("dt", "must be positive"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(ConfigError::new("t_end", "must be nonnegative"));
        }
        if self.agents.is_empty() {
            return Err(ConfigError::new("agents", "at least one agent is required"));
        }
        for (i, a) in self.agents.iter().enumerate() {
            let path = format!("agents[{i}]");
            a.limits.validate(&format!("{path}.limits"))?;
            let s = a.initial;
            if ![s.x, s.y, s.psi, s.u].iter().all(|v| v.is_finite()) {
                return Err(ConfigError::new(format!("{path}.initial"), "must be finite"));
            }
            if s.u < a.limits.u_min || s.u > a.limits.u_max {
                return Err(ConfigError::new(
                    format!("{path}.initial.u"),
                    format!("must lie in [{}, {}]", a.limits.u_min, a.limits.u_max),
                ));
            }
        }
        self.formation.validate("formation.offsets")?;
        if self.formation.offsets.len() != self.agents.len() {
            return Err(ConfigError::new(
                "formation.offsets",
                format!(
                    "expected {} offsets (one per agent), found {}",
                    self.agents.len(),
                    self.formation.offsets.len()
                ),
            ));
        }
        for (j, o) in self.obstacles.iter().enumerate() {
            let path = format!("obstacles[{j}]");
            if !(o.d_min > 0.0 && o.d_min.is_finite()) {
                return Err(ConfigError::new(format!("{path}.d_min"), "must be positive"));
            }
            o.script
                .validate()
                .map_err(|e| ConfigError::new(format!("{path}.segments"), format!("{e}")))?;
            if o.script.start_time() > 0.0 {
                return Err(ConfigError::new(
                    format!("{path}.segments[0].t_start"),
                    "the first segment must start at or before t = 0",
                ));
            }
        }
        if !(self.agent_d_min > 0.0 && self.agent_d_min.is_finite()) {
            return Err(ConfigError::new("agent_d_min", "must be positive"));
        }
        self.scbf.validate("scbf")?;
        let limits: Vec<AgentLimits> = self.agents.iter().map(|a| a.limits).collect();
        self.gains.validate("gains", &limits)?;
        if !(self.jitter.position >= 0.0 && self.jitter.heading >= 0.0) {
            return Err(ConfigError::new("jitter", "must be nonnegative"));
        }
        Ok(())
    }

    /// Number of flow steps; the trace holds one more record than this.
    pub fn steps(&self) -> usize {
        libm::round(self.t_end / self.dt) as usize
    }

    pub fn limits(&self) -> Vec<AgentLimits> {
        self.agents.iter().map(|a| a.limits).collect()
    }

    /// Initial states after seeded jitter.
    pub fn initial_states(&self) -> Vec<AgentState> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.agents
            .iter()
            .map(|a| {
                let s = a.initial;
                if self.jitter.position == 0.0 && self.jitter.heading == 0.0 {
                    return s;
                }
                let mut draw = |w: f64| if w > 0.0 { rng.gen_range(-w..=w) } else { 0.0 };
                let dx = draw(self.jitter.position);
                let dy = draw(self.jitter.position);
                let dpsi = draw(self.jitter.heading);
                AgentState::new(s.x + dx, s.y + dy, s.psi + dpsi, s.u)
            })
            .collect()
    }
}

/// Barrier quantities of one constraint pair at one record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample {
    pub distance: f64,
    /// Effective safety distance used in `h0`.
    pub d_min: f64,
    pub h0: f64,
    pub h1: f64,
    pub h2: f64,
    pub mode: Mode,
    pub headroom: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub step: usize,
    pub t: f64,
    /// Index into the trace's pair list.
    pub pair: usize,
    pub kind: PairKind,
    pub jump: Jump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterStatus {
    Optimal,
    InfeasibleRelaxed,
    /// Filter switched off in the scenario.
    Disabled,
}

impl From<QpStatus> for FilterStatus {
    fn from(s: QpStatus) -> Self {
        match s {
            QpStatus::Optimal => FilterStatus::Optimal,
            QpStatus::InfeasibleRelaxed => FilterStatus::InfeasibleRelaxed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// All heading-rate coefficients of the row are negligible.
    NearCritical { pair: PairKind },
    /// Reference points away from the partner while it closes in faster.
    ReversedCritical { pair: PairKind },
    Relaxed { slack: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub agents: Vec<AgentState>,
    pub desired: Vec<AgentInput>,
    pub applied: Vec<AgentInput>,
    pub obstacles: Vec<ObstacleState>,
    pub pairs: Vec<PairSample>,
    pub status: FilterStatus,
    pub slack: f64,
    pub active_rows: Vec<usize>,
    pub kkt_residual: f64,
    pub barycenter: Vec2,
    pub y_b: f64,
    pub formation_error: f64,
    pub d_f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub jumps: Vec<JumpEvent>,
    pub rows: usize,
    pub status: FilterStatus,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub dt: f64,
    pub n_agents: usize,
    pub n_obstacles: usize,
    pub agent_d_min: f64,
    pub obstacle_d_min: Vec<f64>,
    /// Formation radius of the desired slots.
    pub d_f_d: f64,
    pub pair_kinds: Vec<PairKind>,
    pub records: Vec<StepRecord>,
    pub jumps: Vec<JumpEvent>,
    pub warnings: usize,
}

/// Mutable closed-loop state between steps.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ScenarioConfig,
    limits: Vec<AgentLimits>,
    agents: Vec<AgentState>,
    pairs: Vec<SafetyPair>,
    step: usize,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        let agents = config.initial_states();
        let obstacle_d_min: Vec<f64> = config.obstacles.iter().map(|o| o.d_min).collect();
        let pairs = constraints::build_pairs(agents.len(), &obstacle_d_min, config.agent_d_min, config.mode);
        let limits = config.limits();
        let mut sim = Self {
            config,
            limits,
            agents,
            pairs,
            step: 0,
        };
        if sim.config.filter_enabled {
            let obstacles = sim.obstacles_now()?;
            sim.update_latches(&obstacles);
            for k in 0..sim.pairs.len() {
                let enc = encounter_for(&sim.pairs[k], &sim.agents, &obstacles);
                enc.check(&sim.config.scbf).map_err(|e| sim.geometry_error(k, &enc, e))?;
                sim.pairs[k].mode = enc.initial_mode(&sim.config.scbf);
            }
        }
        Ok(sim)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn pairs(&self) -> &[SafetyPair] {
        &self.pairs
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.dt
    }

    fn obstacles_now(&self) -> Result<Vec<ObstacleState>, SimError> {
        let t = self.time();
        self.config
            .obstacles
            .iter()
            .enumerate()
            .map(|(j, o)| obstacle_at(&o.script, t).map_err(|source| SimError::Script { obstacle: j, source }))
            .collect()
    }

    fn update_latches(&mut self, obstacles: &[ObstacleState]) {
        if !self.config.mode.barycenter_obstacles() {
            return;
        }
        for pair in self.pairs.iter_mut() {
            if let PairKind::BarycenterObstacle { obstacle } = pair.kind {
                let g = barycenter_geometry(&self.agents, &self.config.formation.offsets, &[pair.d_min]);
                let distance = (obstacles[obstacle].p - g.p_b).norm();
                pair.latch_d_bj_min(g.d_bj_min_raw, distance);
            }
        }
    }

    fn geometry_error(&self, pair: usize, enc: &crate::scbf::Encounter, source: crate::error::GeometryError) -> SimError {
        SimError::Geometry {
            step: self.step,
            t: self.time(),
            pair: format!("{}", self.pairs[pair].kind),
            positions: (enc.reference_position(), enc.partner_position()),
            source,
        }
    }

    /// Resolves jumps, computes and filters the inputs at the current time,
    /// and returns the record for it. Does not advance the state.
    pub fn evaluate(&mut self) -> Result<(StepRecord, StepReport), SimError> {
        let t = self.time();
        let params = self.config.scbf;
        let n = self.agents.len();
        let obstacles = self.obstacles_now()?;
        let mut report = StepReport {
            jumps: Vec::new(),
            rows: 0,
            status: FilterStatus::Disabled,
            warnings: Vec::new(),
        };

        if self.config.filter_enabled {
            self.update_latches(&obstacles);
            for k in 0..self.pairs.len() {
                let enc = encounter_for(&self.pairs[k], &self.agents, &obstacles);
                let jump = self.pairs[k]
                    .jump_update(&enc, &params)
                    .map_err(|e| self.geometry_error(k, &enc, e))?;
                if let Some(jump) = jump {
                    report.jumps.push(JumpEvent {
                        step: self.step,
                        t,
                        pair: k,
                        kind: self.pairs[k].kind,
                        jump,
                    });
                }
            }
        }

        let errors = task_errors(&self.agents, &self.config.formation);
        let mut r_d = Vec::with_capacity(n);
        let mut a_d = Vec::with_capacity(n);
        for (i, s) in self.agents.iter().enumerate() {
            let (r, a) = nominal_command(s, errors.y_b, errors.sigma_err[i], &self.config.gains, &self.limits[i]);
            r_d.push(r);
            a_d.push(a);
        }

        let mut pair_samples = Vec::with_capacity(self.pairs.len());
        let mut r_applied = r_d.clone();
        let mut slack = 0.0;
        let mut active_rows = Vec::new();
        let mut kkt_residual = 0.0;

        if self.config.filter_enabled {
            let (system, evals) =
                constraints::assemble(&self.pairs, &self.agents, &obstacles, &a_d, &self.limits, &params).map_err(
                    |(k, e)| {
                        let enc = encounter_for(&self.pairs[k], &self.agents, &obstacles);
                        self.geometry_error(k, &enc, e)
                    },
                )?;
            for ((pair, row), eval) in self.pairs.iter().zip(&system.rows).zip(&evals) {
                if !row.active_hint {
                    report.warnings.push(Warning::NearCritical { pair: pair.kind });
                }
                let enc = encounter_for(pair, &self.agents, &obstacles);
                if eval.h0 > -eval.distance * eval.distance * 0.5 && enc.reversed_critical(pair.mode, &params) {
                    report.warnings.push(Warning::ReversedCritical { pair: pair.kind });
                }
                pair_samples.push(PairSample {
                    distance: eval.distance,
                    d_min: pair.effective_d_min(),
                    h0: eval.h0,
                    h1: eval.h1,
                    h2: eval.h2,
                    mode: pair.mode,
                    headroom: eval.headroom,
                    delta: enc.hysteresis_width(&params),
                });
            }
            report.rows = system.rows.len();
            let problem = QpProblem::new(r_d.clone(), system);
            let sol = qp::solve_or_relax(&problem).map_err(|source| SimError::Qp {
                step: self.step,
                t,
                source,
            })?;
            report.status = sol.status.into();
            if sol.status == QpStatus::InfeasibleRelaxed {
                report.warnings.push(Warning::Relaxed { slack: sol.slack });
            }
            for (i, r) in sol.r.iter().enumerate() {
                let m = self.limits[i].r_max;
                r_applied[i] = r.clamp(-m, m);
            }
            slack = sol.slack;
            active_rows = sol.active_set;
            kkt_residual = sol.kkt_residual;
        } else {
            for pair in &self.pairs {
                let enc = encounter_for(pair, &self.agents, &obstacles);
                let nan = f64::NAN;
                pair_samples.push(PairSample {
                    distance: enc.distance(),
                    d_min: pair.effective_d_min(),
                    h0: enc.h0(),
                    h1: enc.h1(&params),
                    h2: enc.h2(pair.mode, &params),
                    mode: pair.mode,
                    headroom: nan,
                    delta: enc.hysteresis_width(&params),
                });
            }
        }

        let geometry = barycenter_geometry(&self.agents, &self.config.formation.offsets, &[]);
        let record = StepRecord {
            step: self.step,
            t,
            agents: self.agents.clone(),
            desired: r_d.iter().zip(&a_d).map(|(&r, &a)| AgentInput::new(r, a)).collect(),
            applied: r_applied.iter().zip(&a_d).map(|(&r, &a)| AgentInput::new(r, a)).collect(),
            obstacles,
            pairs: pair_samples,
            status: report.status,
            slack,
            active_rows,
            kkt_residual,
            barycenter: geometry.p_b,
            y_b: errors.y_b,
            formation_error: errors.formation_error_sum(),
            d_f: geometry.d_f,
        };
        Ok((record, report))
    }

    /// Integrates one `dt` under the held inputs of `record`.
    pub fn advance(&mut self, record: &StepRecord) {
        let dt = self.config.dt;
        for (i, s) in self.agents.iter_mut().enumerate() {
            *s = step_agent(s, record.applied[i], dt, &self.limits[i]);
        }
        self.step += 1;
    }

    /// One full step: evaluate at `t_k`, then flow to `t_{k+1}`.
    pub fn step(&mut self) -> Result<(StepRecord, StepReport), SimError> {
        let (record, report) = self.evaluate()?;
        self.advance(&record);
        Ok((record, report))
    }
}

/// Runs the scenario from `t = 0` to `t_end`; the trace holds
/// `round(t_end / dt) + 1` records on the grid `t_k = k dt`.
pub fn run(config: &ScenarioConfig) -> Result<SimTrace, SimError> {
    let mut sim = Simulation::new(config.clone())?;
    let steps = config.steps();
    let mut trace = SimTrace {
        dt: config.dt,
        n_agents: config.agents.len(),
        n_obstacles: config.obstacles.len(),
        agent_d_min: config.agent_d_min,
        obstacle_d_min: config.obstacles.iter().map(|o| o.d_min).collect(),
        d_f_d: config.formation.radius(),
        pair_kinds: sim.pairs().iter().map(|p| p.kind).collect(),
        records: Vec::with_capacity(steps + 1),
        jumps: Vec::new(),
        warnings: 0,
    };
    for k in 0..=steps {
        let (record, report) = sim.evaluate()?;
        trace.jumps.extend(report.jumps);
        trace.warnings += report.warnings.len();
        if k < steps {
            sim.advance(&record);
        }
        trace.records.push(record);
    }
    Ok(trace)
}

/// Closest approach of one physical pair over the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyMargin {
    /// Agent–obstacle or agent–agent.
    pub pair: PairKind,
    pub d_min: f64,
    pub min_distance: f64,
    pub t_at_min: f64,
}

impl SafetyMargin {
    /// `min_distance - d_min`.
    pub fn margin(&self) -> f64 {
        self.min_distance - self.d_min
    }

    pub fn ratio(&self) -> f64 {
        self.min_distance / self.d_min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub steps: usize,
    pub duration: f64,
    /// Every agent–agent and agent–obstacle pair, whatever the constraint mode.
    pub margins: Vec<SafetyMargin>,
    pub min_distance_ratio: f64,
    pub max_abs_y_b: f64,
    pub final_y_b: f64,
    pub final_formation_error: f64,
    /// Jumps per constraint pair, in trace pair order.
    pub jump_counts: Vec<usize>,
    pub max_jumps_in_window: usize,
    pub max_abs_r: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub relaxed_steps: usize,
    pub slack_total: f64,
    /// Largest `d_f / d_f_d` while any obstacle is within the encounter
    /// radius of the barycenter; `None` when no encounter happens.
    pub max_formation_ratio_in_encounter: Option<f64>,
    pub warnings: usize,
}

/// Width of the sliding window used for jump-rate statistics, s.
pub const JUMP_WINDOW: f64 = 10.0;

/// Relative distance deficit tolerated before a run counts as unsafe.
pub const SAFETY_TOLERANCE: f64 = 0.01;

impl Summary {
    pub fn is_safe(&self, tolerance: f64) -> bool {
        self.margins.iter().all(|m| m.min_distance >= m.d_min * (1.0 - tolerance))
    }
}

/// An obstacle is "encountering" the formation while it is within
/// `2 (d_min + d_f_d)` of the barycenter.
pub fn encounter_radius(obstacle_d_min: f64, d_f_d: f64) -> f64 {
    2.0 * (obstacle_d_min + d_f_d)
}

pub fn metrics(trace: &SimTrace) -> Summary {
    let n = trace.n_agents;
    let mut margins = Vec::new();
    for i in 0..n {
        for (j, &d_min) in trace.obstacle_d_min.iter().enumerate() {
            margins.push(SafetyMargin {
                pair: PairKind::AgentObstacle { agent: i, obstacle: j },
                d_min,
                min_distance: f64::INFINITY,
                t_at_min: 0.0,
            });
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            margins.push(SafetyMargin {
                pair: PairKind::AgentAgent { i, j },
                d_min: trace.agent_d_min,
                min_distance: f64::INFINITY,
                t_at_min: 0.0,
            });
        }
    }

    let mut max_abs_y_b: f64 = 0.0;
    let mut max_abs_r: f64 = 0.0;
    let mut u_min = f64::INFINITY;
    let mut u_max = f64::NEG_INFINITY;
    let mut relaxed_steps = 0;
    let mut slack_total = 0.0;
    let mut max_formation_ratio: Option<f64> = None;

    for rec in &trace.records {
        for m in margins.iter_mut() {
            let d = match m.pair {
                PairKind::AgentObstacle { agent, obstacle } => {
                    (rec.obstacles[obstacle].p - rec.agents[agent].position()).norm()
                }
                PairKind::AgentAgent { i, j } => (rec.agents[j].position() - rec.agents[i].position()).norm(),
                PairKind::BarycenterObstacle { .. } => continue,
            };
            if d < m.min_distance {
                m.min_distance = d;
                m.t_at_min = rec.t;
            }
        }
        max_abs_y_b = max_abs_y_b.max(rec.y_b.abs());
        for (s, inp) in rec.agents.iter().zip(&rec.applied) {
            max_abs_r = max_abs_r.max(inp.r.abs());
            u_min = u_min.min(s.u);
            u_max = u_max.max(s.u);
        }
        if rec.status == FilterStatus::InfeasibleRelaxed {
            relaxed_steps += 1;
            slack_total += rec.slack;
        }
        let in_encounter = rec.obstacles.iter().zip(&trace.obstacle_d_min).any(|(o, &d)| {
            (o.p - rec.barycenter).norm() <= encounter_radius(d, trace.d_f_d)
        });
        if in_encounter && trace.d_f_d > 0.0 {
            let ratio = rec.d_f / trace.d_f_d;
            max_formation_ratio = Some(max_formation_ratio.map_or(ratio, |m| m.max(ratio)));
        }
    }

    let mut jump_counts = alloc::vec![0; trace.pair_kinds.len()];
    for ev in &trace.jumps {
        jump_counts[ev.pair] += 1;
    }

    let last = trace.records.last();
    Summary {
        steps: trace.records.len().saturating_sub(1),
        duration: last.map_or(0.0, |r| r.t),
        min_distance_ratio: margins.iter().map(|m| m.ratio()).fold(f64::INFINITY, f64::min),
        margins,
        max_abs_y_b,
        final_y_b: last.map_or(0.0, |r| r.y_b),
        final_formation_error: last.map_or(0.0, |r| r.formation_error),
        jump_counts,
        max_jumps_in_window: max_jumps_in_window(trace, JUMP_WINDOW),
        max_abs_r,
        u_min,
        u_max,
        relaxed_steps,
        slack_total,
        max_formation_ratio_in_encounter: max_formation_ratio,
        warnings: trace.warnings,
    }
}

/// Largest number of jumps of a single pair inside any closed window of
/// length `window`.
pub fn max_jumps_in_window(trace: &SimTrace, window: f64) -> usize {
    let mut best = 0;
    for pair in 0..trace.pair_kinds.len() {
        let times: Vec<f64> = trace.jumps.iter().filter(|e| e.pair == pair).map(|e| e.t).collect();
        let mut lo = 0;
        for hi in 0..times.len() {
            while times[hi] - times[lo] > window + 1e-9 {
                lo += 1;
            }
            best = best.max(hi - lo + 1);
        }
    }
    best
}
