//! Scans every agent–agent and agent–obstacle distance in a trace.

use scbf_core::{PairKind, SimTrace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub t: f64,
    pub pair: PairKind,
    pub distance: f64,
    pub d_min: f64,
    /// `d_min (1 - tolerance) - distance`, positive.
    pub deficit: f64,
}

/// Records where a distance drops below `d_min (1 - tolerance)`.
pub fn safety_audit(trace: &SimTrace, tolerance: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    for rec in &trace.records {
        let n = rec.agents.len();
        for i in 0..n {
            let (xi, yi) = (rec.agents[i].x, rec.agents[i].y);
            for (j, o) in rec.obstacles.iter().enumerate() {
                let d_min = trace.obstacle_d_min[j];
                let distance = (o.p.x - xi).hypot(o.p.y - yi);
                let floor = d_min * (1.0 - tolerance);
                if distance < floor {
                    out.push(Violation {
                        t: rec.t,
                        pair: PairKind::AgentObstacle { agent: i, obstacle: j },
                        distance,
                        d_min,
                        deficit: floor - distance,
                    });
                }
            }
            for j in (i + 1)..n {
                let distance = (rec.agents[j].x - xi).hypot(rec.agents[j].y - yi);
                let floor = trace.agent_d_min * (1.0 - tolerance);
                if distance < floor {
                    out.push(Violation {
                        t: rec.t,
                        pair: PairKind::AgentAgent { i, j },
                        distance,
                        d_min: trace.agent_d_min,
                        deficit: floor - distance,
                    });
                }
            }
        }
    }
    out
}
