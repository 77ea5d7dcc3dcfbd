//! Limits files and the feasibility margin report.

use std::fmt::Write as _;
use std::path::Path;

use scbf_core::constraints::{feasibility_margin, feasibility_sweep, VARTHETA_GRID};
use scbf_core::{AgentLimits, ConfigError, FeasibilityParams, FeasibilityReport};
use serde::{Deserialize, Serialize};

use crate::scenario::{from_json_text, read_text, LimitsFile, ScenarioError};

fn default_grid() -> usize {
    VARTHETA_GRID
}

/// One pair family: agent limits, safety distance and partner bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSpec {
    #[serde(default)]
    pub limits: LimitsFile,
    pub d_min: f64,
    /// Class-K gain of the outer barrier, 1/s.
    pub gamma: f64,
    /// Partner speed bound, m/s.
    pub u_omax: f64,
    /// Partner acceleration bound, m/s².
    #[serde(default)]
    pub a_omax: f64,
    #[serde(default = "default_grid")]
    pub vartheta_grid: usize,
}

impl LimitsSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let limits: AgentLimits = self.limits.into();
        limits.validate("limits")?;
        if !(self.d_min > 0.0 && self.d_min.is_finite()) {
            return Err(ConfigError::new("d_min", "must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(ConfigError::new("gamma", "must be positive"));
        }
        for (name, v) in [("u_omax", self.u_omax), ("a_omax", self.a_omax)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::new(name, "must be nonnegative"));
            }
        }
        if self.vartheta_grid == 0 {
            return Err(ConfigError::new("vartheta_grid", "must be at least 1"));
        }
        Ok(())
    }

    pub fn params(&self, gamma: f64) -> FeasibilityParams {
        FeasibilityParams::new(&self.limits.into(), self.d_min, gamma, self.u_omax, self.a_omax)
    }

    pub fn report(&self, gamma: f64) -> FeasibilityReport {
        feasibility_margin(self.params(gamma), self.vartheta_grid)
    }

    /// Best report over the given γ values.
    pub fn sweep(&self, gammas: &[f64]) -> Option<FeasibilityReport> {
        feasibility_sweep(&self.limits.into(), self.d_min, gammas, self.u_omax, self.a_omax, self.vartheta_grid)
    }
}

pub fn parse_limits_str(text: &str) -> Result<LimitsSpec, ScenarioError> {
    let spec: LimitsSpec = from_json_text(text)?;
    spec.validate()?;
    Ok(spec)
}

pub fn parse_limits(path: &Path) -> Result<LimitsSpec, ScenarioError> {
    parse_limits_str(&read_text(path)?)
}

/// Parses `0.1,0.2,0.5` or `lo:hi:n` (n evenly spaced values, both ends
/// included).
pub fn parse_gamma_list(s: &str) -> Result<Vec<f64>, String> {
    let bad = |v: &str| format!("`{v}` is not a positive number");
    let values = if let Some((lo, rest)) = s.split_once(':') {
        let (hi, n) = rest.split_once(':').ok_or_else(|| format!("`{s}`: expected lo:hi:n"))?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad(lo))?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad(hi))?;
        let n: usize = n.trim().parse().map_err(|_| format!("`{n}` is not a count"))?;
        match n {
            0 => return Err("the count must be at least 1".into()),
            1 => vec![lo],
            _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
        }
    } else {
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad(v)))
            .collect::<Result<Vec<_>, _>>()?
    };
    if values.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(format!("`{s}`: every γ must be positive"));
    }
    Ok(values)
}

pub fn format_report(r: &FeasibilityReport) -> String {
    let p = &r.params;
    let mut s = String::new();
    let _ = writeln!(s, "beta1            {:.6}", p.beta1);
    let _ = writeln!(s, "beta2            {:.6}", p.beta2);
    let _ = writeln!(s, "beta3            {:.6}", p.beta3);
    let _ = writeln!(s, "gamma            {:.6}", p.gamma);
    let _ = writeln!(s, "margin           {:.6}", r.margin);
    let _ = writeln!(
        s,
        "argmax vartheta  {:.6} rad (sin = {:.6})",
        r.argmax_vartheta,
        r.argmax_vartheta.sin()
    );
    let verdict = if r.certified() {
        "certified: the safe set is forward invariant"
    } else {
        "inconclusive: the sufficient condition does not hold"
    };
    let _ = writeln!(s, "verdict          {verdict}");
    s
}
