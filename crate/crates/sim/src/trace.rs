//! Wide CSV traces and JSON run summaries.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use scbf_core::sim::{FilterStatus, JumpEvent, SimTrace, StepRecord, Summary};
use scbf_core::{Mode, PairKind, ScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::scenario::scenario_hash;

pub const FORMAT_VERSION: u32 = 1;
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    /// `-` for dimensionless and categorical columns.
    pub unit: String,
}

impl Column {
    fn new(name: impl Into<String>, unit: &str) -> Self {
        Self {
            name: name.into(),
            unit: unit.to_string(),
        }
    }

    /// Header cell, `name [unit]`.
    pub fn label(&self) -> String {
        format!("{} [{}]", self.name, self.unit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFileHeader {
    pub format_version: u32,
    pub scenario_hash: String,
    pub columns: Vec<Column>,
    /// Only every `decimation`-th record is written.
    pub decimation: usize,
}

/// Column manifest of a trace, in write order.
pub fn columns(trace: &SimTrace) -> Vec<Column> {
    let mut cols = vec![Column::new("step", "-"), Column::new("t", "s")];
    for i in 0..trace.n_agents {
        for (f, unit) in [
            ("x", "m"),
            ("y", "m"),
            ("psi", "rad"),
            ("u", "m/s"),
            ("r_d", "rad/s"),
            ("a_d", "m/s^2"),
            ("r", "rad/s"),
            ("a", "m/s^2"),
        ] {
            cols.push(Column::new(format!("a{i}.{f}"), unit));
        }
    }
    for j in 0..trace.n_obstacles {
        for (f, unit) in [("x", "m"), ("y", "m"), ("vx", "m/s"), ("vy", "m/s")] {
            cols.push(Column::new(format!("o{j}.{f}"), unit));
        }
    }
    for kind in &trace.pair_kinds {
        for (f, unit) in [
            ("d", "m"),
            ("d_min", "m"),
            ("h0", "m^2"),
            ("h1", "m^2/s"),
            ("h2", "m^2/s"),
            ("q", "-"),
            ("headroom", "m^2/s"),
            ("delta", "m^2/s"),
        ] {
            cols.push(Column::new(format!("{kind}.{f}"), unit));
        }
    }
    for (name, unit) in [
        ("status", "-"),
        ("slack", "m^2/s^2"),
        ("active_rows", "-"),
        ("kkt_residual", "-"),
        ("barycenter.x", "m"),
        ("barycenter.y", "m"),
        ("y_b", "m"),
        ("formation_error", "m"),
        ("d_f", "m"),
        ("min_agent_distance", "m"),
        ("min_obstacle_distance", "m"),
    ] {
        cols.push(Column::new(name, unit));
    }
    cols
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn mode_value(m: Mode) -> i8 {
    match m {
        Mode::Positive => 1,
        Mode::Negative => -1,
    }
}

pub fn status_label(s: FilterStatus) -> &'static str {
    match s {
        FilterStatus::Optimal => "optimal",
        FilterStatus::InfeasibleRelaxed => "relaxed",
        FilterStatus::Disabled => "disabled",
    }
}

fn min_distances(rec: &StepRecord) -> (f64, f64) {
    let mut agents = f64::INFINITY;
    let mut obstacles = f64::INFINITY;
    for (i, a) in rec.agents.iter().enumerate() {
        for b in &rec.agents[i + 1..] {
            agents = agents.min((b.position() - a.position()).norm());
        }
        for o in &rec.obstacles {
            obstacles = obstacles.min((o.p - a.position()).norm());
        }
    }
    (agents, obstacles)
}

fn row(rec: &StepRecord) -> Vec<String> {
    let f = fmt_f64;
    let mut out = vec![rec.step.to_string(), f(rec.t)];
    for ((s, d), a) in rec.agents.iter().zip(&rec.desired).zip(&rec.applied) {
        out.extend([s.x, s.y, s.psi, s.u, d.r, d.a, a.r, a.a].map(f));
    }
    for o in &rec.obstacles {
        out.extend([o.p.x, o.p.y, o.v.x, o.v.y].map(f));
    }
    for p in &rec.pairs {
        out.extend([p.distance, p.d_min, p.h0, p.h1, p.h2].map(f));
        out.push(mode_value(p.mode).to_string());
        out.extend([p.headroom, p.delta].map(f));
    }
    let active: Vec<String> = rec.active_rows.iter().map(|k| k.to_string()).collect();
    let (min_agents, min_obstacles) = min_distances(rec);
    out.push(status_label(rec.status).to_string());
    out.push(f(rec.slack));
    out.push(active.join(";"));
    out.push(f(rec.kkt_residual));
    out.extend(
        [
            rec.barycenter.x,
            rec.barycenter.y,
            rec.y_b,
            rec.formation_error,
            rec.d_f,
            min_agents,
            min_obstacles,
        ]
        .map(f),
    );
    out
}

/// Writes the CSV for every `decimation`-th record (the first is always
/// included) and returns the header describing it.
pub fn write_csv<W: Write>(
    trace: &SimTrace,
    config: &ScenarioConfig,
    decimation: usize,
    out: W,
) -> Result<TraceFileHeader, csv::Error> {
    let decimation = decimation.max(1);
    let header = TraceFileHeader {
        format_version: FORMAT_VERSION,
        scenario_hash: scenario_hash(config),
        columns: columns(trace),
        decimation,
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header.columns.iter().map(Column::label))?;
    for rec in trace.records.iter().step_by(decimation) {
        w.write_record(row(rec))?;
    }
    w.flush()?;
    Ok(header)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginFile {
    pub pair: String,
    pub d_min: f64,
    pub min_distance: f64,
    pub t_at_min: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpFile {
    pub t: f64,
    pub pair: String,
    pub from: i8,
    pub to: i8,
    pub h2_before: f64,
    pub h2_after: f64,
    pub delta: f64,
}

impl From<&JumpEvent> for JumpFile {
    fn from(e: &JumpEvent) -> Self {
        Self {
            t: e.t,
            pair: e.kind.to_string(),
            from: mode_value(e.jump.from),
            to: mode_value(e.jump.to),
            h2_before: e.jump.h2_before,
            h2_after: e.jump.h2_after,
            delta: e.jump.delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub steps: usize,
    pub duration: f64,
    pub safe: bool,
    pub safety_tolerance: f64,
    pub min_distance_ratio: f64,
    pub margins: Vec<MarginFile>,
    pub max_abs_y_b: f64,
    pub final_y_b: f64,
    pub final_formation_error: f64,
    /// Keyed by constraint pair label.
    pub jump_counts: Vec<(String, usize)>,
    pub max_jumps_in_window: usize,
    pub max_abs_r: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub relaxed_steps: usize,
    pub slack_total: f64,
    pub max_formation_ratio_in_encounter: Option<f64>,
    pub warnings: usize,
}

impl MetricsFile {
    pub fn new(summary: &Summary, pair_kinds: &[PairKind], tolerance: f64) -> Self {
        Self {
            steps: summary.steps,
            duration: summary.duration,
            safe: summary.is_safe(tolerance),
            safety_tolerance: tolerance,
            min_distance_ratio: summary.min_distance_ratio,
            margins: summary
                .margins
                .iter()
                .map(|m| MarginFile {
                    pair: m.pair.to_string(),
                    d_min: m.d_min,
                    min_distance: m.min_distance,
                    t_at_min: m.t_at_min,
                    margin: m.margin(),
                })
                .collect(),
            max_abs_y_b: summary.max_abs_y_b,
            final_y_b: summary.final_y_b,
            final_formation_error: summary.final_formation_error,
            jump_counts: pair_kinds
                .iter()
                .zip(&summary.jump_counts)
                .map(|(k, &c)| (k.to_string(), c))
                .collect(),
            max_jumps_in_window: summary.max_jumps_in_window,
            max_abs_r: summary.max_abs_r,
            u_min: summary.u_min,
            u_max: summary.u_max,
            relaxed_steps: summary.relaxed_steps,
            slack_total: summary.slack_total,
            max_formation_ratio_in_encounter: summary.max_formation_ratio_in_encounter,
            warnings: summary.warnings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub scenario: String,
    pub header: TraceFileHeader,
    pub metrics: MetricsFile,
    pub jumps: Vec<JumpFile>,
}

#[derive(Debug, thiserror::Error)]
pub enum WriteError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

/// Writes `trace.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_trace(
    trace: &SimTrace,
    summary: &Summary,
    config: &ScenarioConfig,
    dir: &Path,
    decimation: usize,
    tolerance: f64,
) -> Result<SummaryFile, WriteError> {
    fs::create_dir_all(dir).map_err(|source| WriteError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let csv_path = dir.join(TRACE_FILE);
    let file = fs::File::create(&csv_path).map_err(|source| WriteError::Io {
        path: csv_path.clone(),
        source,
    })?;
    let header = write_csv(trace, config, decimation, io::BufWriter::new(file)).map_err(|source| WriteError::Csv {
        path: csv_path.clone(),
        source,
    })?;
    let out = SummaryFile {
        scenario: config.name.clone(),
        header,
        metrics: MetricsFile::new(summary, &trace.pair_kinds, tolerance),
        jumps: trace.jumps.iter().map(JumpFile::from).collect(),
    };
    let json_path = dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&out).map_err(|source| WriteError::Json {
        path: json_path.clone(),
        source,
    })?;
    text.push('\n');
    fs::write(&json_path, text).map_err(|source| WriteError::Io { path: json_path, source })?;
    Ok(out)
}
