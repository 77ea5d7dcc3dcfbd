//! JSON scenario files.
//!
//! Every struct here mirrors a core config type field for field, so the
//! dotted paths reported by core validation point at real keys in the file.

use std::fs;
use std::path::{Path, PathBuf};

use scbf_core::constraints::ConstraintMode;
use scbf_core::dynamics::{AgentLimits, AgentState, ObstacleScript, ScriptSegment};
use scbf_core::nominal::{FormationSpec, NominalGains};
use scbf_core::sim::{AgentConfig, Jitter, ObstacleConfig, ScenarioConfig};
use scbf_core::{ClassK, ConfigError, HysteresisRule, ScbfParams, Vec2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_DT: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error at line {line}, column {column} (field `{field}`): {message}")]
    Parse {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(ConfigError),
}

impl From<ConfigError> for ScenarioError {
    fn from(e: ConfigError) -> Self {
        ScenarioError::Invalid(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModeFile {
    #[default]
    Pairwise,
    Barycenter,
    Both,
}

impl From<ModeFile> for ConstraintMode {
    fn from(m: ModeFile) -> Self {
        match m {
            ModeFile::Pairwise => ConstraintMode::Pairwise,
            ModeFile::Barycenter => ConstraintMode::Barycenter,
            ModeFile::Both => ConstraintMode::Both,
        }
    }
}

impl From<ConstraintMode> for ModeFile {
    fn from(m: ConstraintMode) -> Self {
        match m {
            ConstraintMode::Pairwise => ModeFile::Pairwise,
            ConstraintMode::Barycenter => ModeFile::Barycenter,
            ConstraintMode::Both => ModeFile::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsFile {
    pub r_max: f64,
    pub a_max: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for LimitsFile {
    fn default() -> Self {
        AgentLimits::default().into()
    }
}

impl From<LimitsFile> for AgentLimits {
    fn from(l: LimitsFile) -> Self {
        AgentLimits {
            r_max: l.r_max,
            a_max: l.a_max,
            u_min: l.u_min,
            u_max: l.u_max,
        }
    }
}

impl From<AgentLimits> for LimitsFile {
    fn from(l: AgentLimits) -> Self {
        LimitsFile {
            r_max: l.r_max,
            a_max: l.a_max,
            u_min: l.u_min,
            u_max: l.u_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub initial: StateFile,
    /// Falls back to the scenario-wide `limits`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitsFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationFile {
    pub offsets: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentFile {
    pub t_start: f64,
    pub velocity: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleFile {
    pub d_min: f64,
    /// Position at the first segment's start time.
    pub start: [f64; 2],
    pub segments: Vec<SegmentFile>,
}

/// Exactly one of the two keys may be given; neither means `factor = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct HysteresisFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScbfFile {
    pub vartheta: f64,
    pub gamma0: f64,
    pub gamma2: f64,
    pub hysteresis: HysteresisFile,
    pub excluded_radius: f64,
}

impl Default for ScbfFile {
    fn default() -> Self {
        Self::from(ScbfParams::default())
    }
}

impl From<ScbfParams> for ScbfFile {
    fn from(p: ScbfParams) -> Self {
        let hysteresis = match p.hysteresis {
            HysteresisRule::Product { factor } => HysteresisFile {
                factor: Some(factor),
                width: None,
            },
            HysteresisRule::Constant { width } => HysteresisFile {
                factor: None,
                width: Some(width),
            },
        };
        Self {
            vartheta: p.vartheta,
            gamma0: p.alpha0.gain(),
            gamma2: p.alpha2.gain(),
            hysteresis,
            excluded_radius: p.excluded_radius,
        }
    }
}

impl ScbfFile {
    fn to_params(self) -> Result<ScbfParams, ConfigError> {
        let hysteresis = match (self.hysteresis.factor, self.hysteresis.width) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::new("scbf.hysteresis", "give either `factor` or `width`, not both"))
            }
            (Some(factor), None) => HysteresisRule::Product { factor },
            (None, Some(width)) => HysteresisRule::Constant { width },
            (None, None) => HysteresisRule::default(),
        };
        Ok(ScbfParams {
            vartheta: self.vartheta,
            alpha0: ClassK::linear(self.gamma0),
            alpha2: ClassK::linear(self.gamma2),
            hysteresis,
            excluded_radius: self.excluded_radius,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsFile {
    pub k_path: f64,
    pub k_form: f64,
    pub k_psi: f64,
    pub k_u: f64,
    pub u_ref: f64,
    pub lookahead: f64,
}

impl Default for GainsFile {
    fn default() -> Self {
        NominalGains::default().into()
    }
}

impl From<NominalGains> for GainsFile {
    fn from(g: NominalGains) -> Self {
        Self {
            k_path: g.k_path,
            k_form: g.k_form,
            k_psi: g.k_psi,
            k_u: g.k_u,
            u_ref: g.u_ref,
            lookahead: g.lookahead,
        }
    }
}

impl From<GainsFile> for NominalGains {
    fn from(g: GainsFile) -> Self {
        Self {
            k_path: g.k_path,
            k_form: g.k_form,
            k_psi: g.k_psi,
            k_u: g.k_u,
            u_ref: g.u_ref,
            lookahead: g.lookahead,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct JitterFile {
    pub position: f64,
    pub heading: f64,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_true() -> bool {
    true
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

/// On-disk scenario. Keys with defaults may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    /// Free text, ignored by the simulator.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub jitter: JitterFile,
    #[serde(default = "default_true")]
    pub filter_enabled: bool,
    #[serde(default)]
    pub mode: ModeFile,
    /// Limits of every agent that does not carry its own.
    #[serde(default)]
    pub limits: LimitsFile,
    pub agents: Vec<AgentFile>,
    pub formation: FormationFile,
    #[serde(default)]
    pub obstacles: Vec<ObstacleFile>,
    pub agent_d_min: f64,
    #[serde(default)]
    pub scbf: ScbfFile,
    #[serde(default)]
    pub gains: GainsFile,
}

fn v2(p: [f64; 2]) -> Vec2 {
    Vec2::new(p[0], p[1])
}

impl ScenarioFile {
    /// Converts and validates.
    pub fn to_config(&self) -> Result<ScenarioConfig, ConfigError> {
        let shared: AgentLimits = self.limits.into();
        shared.validate("limits")?;
        let agents = self
            .agents
            .iter()
            .map(|a| AgentConfig {
                initial: AgentState::new(a.initial.x, a.initial.y, a.initial.psi, a.initial.u),
                limits: a.limits.map_or(shared, Into::into),
            })
            .collect();
        let obstacles = self
            .obstacles
            .iter()
            .enumerate()
            .map(|(j, o)| {
                if o.segments.is_empty() {
                    return Err(ConfigError::new(format!("obstacles[{j}].segments"), "at least one segment is required"));
                }
                Ok(ObstacleConfig {
                    script: ObstacleScript {
                        start: v2(o.start),
                        segments: o
                            .segments
                            .iter()
                            .map(|s| ScriptSegment {
                                t_start: s.t_start,
                                velocity: v2(s.velocity),
                            })
                            .collect(),
                    },
                    d_min: o.d_min,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let config = ScenarioConfig {
            name: self.name.clone(),
            agents,
            formation: FormationSpec::new(self.formation.offsets.iter().map(|&p| v2(p)).collect()),
            obstacles,
            agent_d_min: self.agent_d_min,
            scbf: self.scbf.to_params()?,
            mode: self.mode.into(),
            gains: self.gains.into(),
            dt: self.dt,
            t_end: self.t_end,
            seed: self.seed,
            jitter: Jitter {
                position: self.jitter.position,
                heading: self.jitter.heading,
            },
            filter_enabled: self.filter_enabled,
        };
        config.validate()?;
        Ok(config)
    }

    /// File form of a config. Limits are written per agent.
    pub fn from_config(c: &ScenarioConfig) -> Self {
        Self {
            name: c.name.clone(),
            description: String::new(),
            dt: c.dt,
            t_end: c.t_end,
            seed: c.seed,
            jitter: JitterFile {
                position: c.jitter.position,
                heading: c.jitter.heading,
            },
            filter_enabled: c.filter_enabled,
            mode: c.mode.into(),
            limits: LimitsFile::default(),
            agents: c
                .agents
                .iter()
                .map(|a| AgentFile {
                    initial: StateFile {
                        x: a.initial.x,
                        y: a.initial.y,
                        psi: a.initial.psi,
                        u: a.initial.u,
                    },
                    limits: Some(a.limits.into()),
                })
                .collect(),
            formation: FormationFile {
                offsets: c.formation.offsets.iter().map(|o| [o.x, o.y]).collect(),
            },
            obstacles: c
                .obstacles
                .iter()
                .map(|o| ObstacleFile {
                    d_min: o.d_min,
                    start: [o.script.start.x, o.script.start.y],
                    segments: o
                        .script
                        .segments
                        .iter()
                        .map(|s| SegmentFile {
                            t_start: s.t_start,
                            velocity: [s.velocity.x, s.velocity.y],
                        })
                        .collect(),
                })
                .collect(),
            agent_d_min: c.agent_d_min,
            scbf: c.scbf.into(),
            gains: c.gains.into(),
        }
    }
}

/// Deserializes with the failing field's path in the error.
pub fn parse_file_value(value: serde_json::Value) -> Result<ScenarioFile, ScenarioError> {
    serde_path_to_error::deserialize(value).map_err(|e| ScenarioError::Parse {
        line: 0,
        column: 0,
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub(crate) fn from_json_text<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Parse {
        line: e.inner().line(),
        column: e.inner().column(),
        field: e.path().to_string(),
        message: strip_location(&e.inner().to_string()),
    })
}

pub fn parse_file_str(text: &str) -> Result<ScenarioFile, ScenarioError> {
    from_json_text(text)
}

fn strip_location(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

pub fn parse_scenario_str(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    Ok(parse_file_str(text)?.to_config()?)
}

pub fn read_text(path: &Path) -> Result<String, ScenarioError> {
    fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    parse_scenario_str(&read_text(path)?)
}

pub fn to_json(config: &ScenarioConfig) -> String {
    serde_json::to_string_pretty(&ScenarioFile::from_config(config)).expect("scenario files always serialize")
}

/// SHA-256 of the canonical compact serialization, hex encoded.
pub fn scenario_hash(config: &ScenarioConfig) -> String {
    let bytes = serde_json::to_vec(&ScenarioFile::from_config(config)).expect("scenario files always serialize");
    hex::encode(Sha256::digest(bytes))
}
