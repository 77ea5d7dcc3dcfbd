//! Parameter sweeps over a scenario file.

use rayon::prelude::*;
use serde_json::Value;

use scbf_core::sim::{self, Summary};
use scbf_core::{ScenarioConfig, SimError, SimTrace};

use crate::scenario::{parse_file_value, ScenarioError};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Key(String),
    Index(usize),
}

/// Splits `obstacles[0].segments[1].velocity[0]` into keys and indices.
fn parse_path(path: &str) -> Result<Vec<Segment>, String> {
    let mut out = Vec::new();
    for part in path.split('.') {
        let (key, mut rest) = match part.find('[') {
            Some(i) => (&part[..i], &part[i..]),
            None => (part, ""),
        };
        if key.is_empty() && out.is_empty() {
            return Err(format!("`{path}`: path must start with a key"));
        }
        if !key.is_empty() {
            out.push(Segment::Key(key.to_string()));
        }
        while !rest.is_empty() {
            let close = rest.find(']').ok_or_else(|| format!("`{path}`: unclosed `[`"))?;
            let idx = rest[1..close]
                .parse()
                .map_err(|_| format!("`{path}`: `{}` is not an index", &rest[1..close]))?;
            out.push(Segment::Index(idx));
            rest = &rest[close + 1..];
            if !rest.is_empty() && !rest.starts_with('[') {
                return Err(format!("`{path}`: unexpected `{rest}`"));
            }
        }
    }
    if out.is_empty() {
        return Err("empty parameter path".into());
    }
    Ok(out)
}

/// Sets the value at a dotted path. Missing object keys on the way are
/// created, so defaulted fields can be swept; array indices must exist.
pub fn set_param(root: &mut Value, path: &str, value: Value) -> Result<(), String> {
    let segments = parse_path(path)?;
    let mut cur = root;
    for seg in &segments {
        cur = match seg {
            Segment::Key(k) => match cur {
                Value::Object(map) => map.entry(k.clone()).or_insert(Value::Object(Default::default())),
                _ => return Err(format!("`{path}`: `{k}` is not inside an object")),
            },
            Segment::Index(i) => match cur {
                Value::Array(items) => {
                    let len = items.len();
                    items
                        .get_mut(*i)
                        .ok_or_else(|| format!("`{path}`: index {i} out of range (length {len})"))?
                }
                _ => return Err(format!("`{path}`: [{i}] applied to a non-array")),
            },
        };
    }
    *cur = value;
    Ok(())
}

/// Comma-separated list; each item is read as JSON, bare words as strings.
pub fn parse_values(s: &str) -> Vec<Value> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string())))
        .collect()
}

/// Builds one validated config per value.
pub fn variants(base: &Value, path: &str, values: &[Value]) -> Result<Vec<ScenarioConfig>, String> {
    values
        .iter()
        .map(|v| {
            let mut doc = base.clone();
            set_param(&mut doc, path, v.clone())?;
            let file = parse_file_value(doc).map_err(|e| format!("{path} = {v}: {e}"))?;
            let mut config = file
                .to_config()
                .map_err(|e| format!("{path} = {v}: {}", ScenarioError::Invalid(e)))?;
            config.name = format!("{}.{}={}", config.name, path, v);
            Ok(config)
        })
        .collect()
}

pub struct SweepRun {
    pub config: ScenarioConfig,
    pub result: Result<(SimTrace, Summary), SimError>,
}

/// Runs every config concurrently; results come back in input order.
pub fn run_all(configs: Vec<ScenarioConfig>) -> Vec<SweepRun> {
    configs
        .into_par_iter()
        .map(|config| {
            let result = sim::run(&config).map(|trace| {
                let summary = sim::metrics(&trace);
                (trace, summary)
            });
            SweepRun { config, result }
        })
        .collect()
}
