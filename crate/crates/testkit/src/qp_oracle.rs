//! Brute-force reference for `min ½‖r - r_d‖²` over `G r ≤ b` and the box.
//!
//! A feasible grid point is located by exhaustive search, then the
//! projection of `r_d` is refined with Dykstra's alternating projections
//! onto the half-spaces and the box. Rows nearly tight at the Dykstra point
//! are then enumerated as candidate active sets and the best feasible face
//! projection is kept.

use scbf_core::QpProblem;

/// Upper limit on the number of grid points visited.
pub const GRID_BUDGET: usize = 400_000;
/// Allowed row violation for a point to count as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;

const DYKSTRA_SWEEPS: usize = 200_000;
const DYKSTRA_STALL: f64 = 1e-14;
/// Dykstra converges slowly inside thin wedges; its end point is accepted
/// at this looser violation.
pub const REFINED_TOL: f64 = 1e-6;
/// Rows within this normalized distance of the Dykstra point are candidates
/// for the active set.
const POLISH_WINDOW: f64 = 1e-4;
const POLISH_CANDIDATES: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleResult {
    Found {
        r: Vec<f64>,
        objective: f64,
        /// Best objective on the grid, if any grid point was feasible.
        grid_objective: Option<f64>,
    },
    /// Neither the grid nor the refinement produced a feasible point.
    Unknown,
}

impl OracleResult {
    pub fn point(&self) -> Option<&[f64]> {
        match self {
            OracleResult::Found { r, .. } => Some(r),
            OracleResult::Unknown => None,
        }
    }
}

fn objective(r: &[f64], rd: &[f64]) -> f64 {
    0.5 * r.iter().zip(rd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

fn max_violation(p: &QpProblem, r: &[f64]) -> f64 {
    let rows = p.system.rows.iter().map(|row| {
        let norm = row.coefficients.iter().map(|g| g * g).sum::<f64>().sqrt().max(1.0);
        (row.coefficients.iter().zip(r).map(|(g, x)| g * x).sum::<f64>() - row.bound) / norm
    });
    let boxes = r.iter().zip(&p.system.r_max).map(|(x, m)| x.abs() - m);
    rows.chain(boxes).fold(f64::NEG_INFINITY, f64::max)
}

fn grid_search(p: &QpProblem, resolution: f64) -> Option<(Vec<f64>, f64)> {
    let n = p.system.n_agents;
    if n == 0 {
        return Some((Vec::new(), 0.0));
    }
    let mut per_dim: Vec<usize> = p
        .system
        .r_max
        .iter()
        .map(|m| ((2.0 * m / resolution).floor() as usize + 1).max(2))
        .collect();
    let budget_per_dim = (GRID_BUDGET as f64).powf(1.0 / n as f64).floor().max(2.0) as usize;
    for c in per_dim.iter_mut() {
        *c = (*c).min(budget_per_dim);
    }
    let mut idx = vec![0usize; n];
    let mut point = vec![0.0; n];
    let mut best: Option<(Vec<f64>, f64)> = None;
    loop {
        for k in 0..n {
            let m = p.system.r_max[k];
            point[k] = -m + 2.0 * m * idx[k] as f64 / (per_dim[k] - 1) as f64;
        }
        if max_violation(p, &point) <= FEASIBILITY_TOL {
            let obj = objective(&point, &p.r_desired);
            if best.as_ref().is_none_or(|(_, b)| obj < *b) {
                best = Some((point.clone(), obj));
            }
        }
        let mut k = 0;
        loop {
            if k == n {
                return best;
            }
            idx[k] += 1;
            if idx[k] < per_dim[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Dykstra's method: converges to the Euclidean projection of `r_d` onto
/// the intersection of the half-spaces and the box.
fn dykstra(p: &QpProblem) -> Vec<f64> {
    let n = p.system.n_agents;
    let sets = p.system.rows.len() + 1;
    let mut x = p.r_desired.clone();
    let mut corrections = vec![vec![0.0; n]; sets];
    for _ in 0..DYKSTRA_SWEEPS {
        let mut change = 0.0f64;
        for s in 0..sets {
            let y: Vec<f64> = x.iter().zip(&corrections[s]).map(|(a, c)| a + c).collect();
            let projected: Vec<f64> = if s < p.system.rows.len() {
                let row = &p.system.rows[s];
                let g = &row.coefficients;
                let gg: f64 = g.iter().map(|v| v * v).sum();
                let excess = g.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() - row.bound;
                if gg == 0.0 || excess <= 0.0 {
                    y.clone()
                } else {
                    y.iter().zip(g).map(|(v, gk)| v - excess / gg * gk).collect()
                }
            } else {
                y.iter()
                    .zip(&p.system.r_max)
                    .map(|(v, m)| v.clamp(-m, *m))
                    .collect()
            };
            for k in 0..n {
                corrections[s][k] = y[k] - projected[k];
                change = change.max((projected[k] - x[k]).abs());
            }
            x = projected;
        }
        if change < DYKSTRA_STALL {
            break;
        }
    }
    x
}

/// Rows as `(normal, bound)` with the box appended as `±e_k · r ≤ r_max`.
fn all_rows(p: &QpProblem) -> Vec<(Vec<f64>, f64)> {
    let n = p.system.n_agents;
    let mut rows: Vec<(Vec<f64>, f64)> = p
        .system
        .rows
        .iter()
        .map(|r| (r.coefficients.clone(), r.bound))
        .collect();
    for k in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[k] = sign;
            rows.push((e, p.system.r_max[k]));
        }
    }
    rows
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let m = b.len();
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..m {
            let f = a[row][col] / a[col][col];
            for k in col..m {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = ((i + 1)..m).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Projection of `r_d` onto the affine set where every row in `subset` is
/// tight.
fn face_projection(rd: &[f64], rows: &[(Vec<f64>, f64)], subset: &[usize]) -> Option<Vec<f64>> {
    let gram: Vec<Vec<f64>> = subset
        .iter()
        .map(|&i| subset.iter().map(|&j| dot(&rows[i].0, &rows[j].0)).collect())
        .collect();
    let rhs: Vec<f64> = subset.iter().map(|&i| dot(&rows[i].0, rd) - rows[i].1).collect();
    let lambda = solve_dense(gram, rhs)?;
    let mut x = rd.to_vec();
    for (&i, l) in subset.iter().zip(&lambda) {
        for (xk, gk) in x.iter_mut().zip(&rows[i].0) {
            *xk -= l * gk;
        }
    }
    Some(x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact face projections over every subset of the rows that are nearly
/// tight at `approx`; keeps the best feasible one.
fn polish(p: &QpProblem, approx: &[f64]) -> Option<Vec<f64>> {
    let n = p.system.n_agents;
    let rows = all_rows(p);
    let mut near: Vec<(usize, f64)> = rows
        .iter()
        .enumerate()
        .map(|(i, (g, b))| {
            let norm = dot(g, g).sqrt().max(1e-300);
            (i, (dot(g, approx) - b) / norm)
        })
        .filter(|(_, r)| *r > -POLISH_WINDOW)
        .collect();
    near.sort_by(|a, b| b.1.total_cmp(&a.1));
    near.truncate(POLISH_CANDIDATES);
    let cands: Vec<usize> = near.into_iter().map(|(i, _)| i).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0u32..(1 << cands.len()) {
        if mask.count_ones() as usize > n {
            continue;
        }
        let subset: Vec<usize> = (0..cands.len()).filter(|k| mask & (1 << k) != 0).map(|k| cands[k]).collect();
        let Some(x) = face_projection(&p.r_desired, &rows, &subset) else {
            continue;
        };
        if max_violation(p, &x) <= FEASIBILITY_TOL {
            let obj = objective(&x, &p.r_desired);
            if best.as_ref().is_none_or(|(_, b)| obj < *b) {
                best = Some((x, obj));
            }
        }
    }
    best.map(|(x, _)| x)
}

/// `resolution` is the target grid spacing in rad/s; it is coarsened when
/// the full grid would exceed [`GRID_BUDGET`] points.
pub fn qp_grid_oracle(p: &QpProblem, resolution: f64) -> OracleResult {
    let grid = grid_search(p, resolution);
    let approx = dykstra(p);
    let refined = polish(p, &approx).unwrap_or(approx);
    let refined_ok = max_violation(p, &refined) <= REFINED_TOL;
    match (grid, refined_ok) {
        (grid, true) => OracleResult::Found {
            objective: objective(&refined, &p.r_desired),
            r: refined,
            grid_objective: grid.map(|(_, o)| o),
        },
        (Some((r, obj)), false) => OracleResult::Found {
            r,
            objective: obj,
            grid_objective: Some(obj),
        },
        (None, false) => OracleResult::Unknown,
    }
}
