//! Central differences along the flow with Richardson extrapolation.
//!
//! The stacked state is `[x, y, ψ, u]` per agent followed by
//! `[px, py, vx, vy, ax, ay]` per obstacle. Obstacles move with constant
//! acceleration; agents follow the unicycle with inputs `(r, a)`.

use scbf_core::{AgentState, ObstacleState};

/// Barrier values reach 1e4 m²/s, so smaller steps lose more to roundoff than
/// the fourth-order extrapolated stencil gains.
pub const DEFAULT_STEP: f64 = 1e-3;

const AGENT_DIM: usize = 4;
const OBSTACLE_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n_agents: usize,
    pub n_obstacles: usize,
}

impl StateLayout {
    pub fn dim(&self) -> usize {
        self.n_agents * AGENT_DIM + self.n_obstacles * OBSTACLE_DIM
    }

    pub fn agent(&self, i: usize) -> usize {
        i * AGENT_DIM
    }

    pub fn obstacle(&self, j: usize) -> usize {
        self.n_agents * AGENT_DIM + j * OBSTACLE_DIM
    }

    pub fn pack(&self, agents: &[AgentState], obstacles: &[ObstacleState]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        for s in agents {
            x.extend([s.x, s.y, s.psi, s.u]);
        }
        for o in obstacles {
            x.extend([o.p.x, o.p.y, o.v.x, o.v.y, o.a.x, o.a.y]);
        }
        x
    }

    /// Input-free vector field.
    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.dim()];
        for i in 0..self.n_agents {
            let k = self.agent(i);
            let (psi, u) = (x[k + 2], x[k + 3]);
            f[k] = u * psi.cos();
            f[k + 1] = u * psi.sin();
        }
        for j in 0..self.n_obstacles {
            let k = self.obstacle(j);
            f[k] = x[k + 2];
            f[k + 1] = x[k + 3];
            f[k + 2] = x[k + 4];
            f[k + 3] = x[k + 5];
        }
        f
    }

    /// Direction moved by agent `i`'s heading rate (`channel = 0`) or
    /// acceleration (`channel = 1`).
    pub fn input_field(&self, i: usize, channel: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        g[self.agent(i) + 2 + channel] = 1.0;
        g
    }
}

/// Finite-difference `L_f h` and per-agent `L_g h` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LieEstimate {
    pub lf: f64,
    /// Heading-rate channel per agent.
    pub lg_r: Vec<f64>,
    /// Acceleration channel per agent.
    pub lg_a: Vec<f64>,
}

fn central(h: &dyn Fn(&[f64]) -> f64, x: &[f64], dir: &[f64], eps: f64) -> f64 {
    let plus: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + eps * d).collect();
    let minus: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a - eps * d).collect();
    (h(&plus) - h(&minus)) / (2.0 * eps)
}

/// Directional derivative of `h` along `dir`, Richardson-extrapolated from
/// steps `eps` and `eps / 2`.
pub fn directional(h: &dyn Fn(&[f64]) -> f64, x: &[f64], dir: &[f64], eps: f64) -> f64 {
    let coarse = central(h, x, dir, eps);
    let fine = central(h, x, dir, 0.5 * eps);
    (4.0 * fine - coarse) / 3.0
}

/// Plain central difference, no extrapolation (for stencil-order checks).
pub fn directional_central(h: &dyn Fn(&[f64]) -> f64, x: &[f64], dir: &[f64], eps: f64) -> f64 {
    central(h, x, dir, eps)
}

pub fn fd_lie_derivatives(
    h: &dyn Fn(&[f64]) -> f64,
    layout: StateLayout,
    x: &[f64],
    eps: f64,
) -> LieEstimate {
    let f = layout.drift(x);
    LieEstimate {
        lf: directional(h, x, &f, eps),
        lg_r: (0..layout.n_agents)
            .map(|i| directional(h, x, &layout.input_field(i, 0), eps))
            .collect(),
        lg_a: (0..layout.n_agents)
            .map(|i| directional(h, x, &layout.input_field(i, 1), eps))
            .collect(),
    }
}
