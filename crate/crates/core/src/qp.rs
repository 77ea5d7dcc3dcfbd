//! Min-norm heading-rate program
//!
//! ```text
//! minimize ½‖r - r_d‖²  subject to  G r ≤ b,  |r_k| ≤ r_max[k]
//! ```
//!
//! solved with a dual active-set method specialised to the identity
//! Hessian. The iteration starts from the unconstrained minimizer `r_d` and
//! adds the most violated row until none is left, so a pre-satisfied
//! problem returns `r_d` untouched.

use alloc::vec::Vec;

use crate::constraints::ConstraintSystem;
use crate::error::QpError;
use crate::math;

/// Normalized violation above which a row is added to the active set.
const VIOLATION_TOL: f64 = 1e-12;
/// Rows whose coefficient norm is below this have no usable normal.
const ZERO_NORMAL: f64 = 1e-14;
/// Residual norm under which a new normal is treated as dependent.
const DEPENDENT: f64 = 1e-10;
/// Relative width at which the slack bisection stops.
const SLACK_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub r_desired: Vec<f64>,
    pub system: ConstraintSystem,
}

impl QpProblem {
    pub fn new(r_desired: Vec<f64>, system: ConstraintSystem) -> Self {
        Self { r_desired, system }
    }

    fn check_dimensions(&self) -> Result<(), QpError> {
        let n = self.system.n_agents;
        let mismatch = |found: usize| Err(QpError::DimensionMismatch { expected: n, found });
        if self.r_desired.len() != n {
            return mismatch(self.r_desired.len());
        }
        if self.system.r_max.len() != n {
            return mismatch(self.system.r_max.len());
        }
        if let Some(row) = self.system.rows.iter().find(|r| r.coefficients.len() != n) {
            return mismatch(row.coefficients.len());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QpStatus {
    Optimal,
    /// Barrier rows were loosened by a uniform slack to restore feasibility.
    InfeasibleRelaxed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub r: Vec<f64>,
    pub status: QpStatus,
    /// Barrier rows (indices into `system.rows`) in the final active set.
    pub active_set: Vec<usize>,
    /// Agents whose box bound is active, with the sign of the bound.
    pub active_box: Vec<(usize, i8)>,
    /// One multiplier per barrier row, zero for inactive rows.
    pub multipliers: Vec<f64>,
    pub kkt_residual: f64,
    /// Uniform slack added to every barrier row (zero when optimal).
    pub slack: f64,
    /// Per-row violation `max(0, g·r - b)` of the original rows.
    pub slack_used: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Origin {
    Row(usize),
    Upper(usize),
    Lower(usize),
}

/// Unit-normal rows `n·x ≤ c`, box included.
struct Normalized {
    normals: Vec<Vec<f64>>,
    bounds: Vec<f64>,
    scale: Vec<f64>,
    origin: Vec<Origin>,
}

impl Normalized {
    fn build(system: &ConstraintSystem, slack: f64) -> Result<Self, QpError> {
        let n = system.n_agents;
        let mut out = Normalized {
            normals: Vec::new(),
            bounds: Vec::new(),
            scale: Vec::new(),
            origin: Vec::new(),
        };
        for (i, row) in system.rows.iter().enumerate() {
            let norm = math::sqrt(row.coefficients.iter().map(|g| g * g).sum());
            let bound = row.bound + slack;
            if !(norm > ZERO_NORMAL) {
                if bound < -VIOLATION_TOL {
                    return Err(QpError::Infeasible);
                }
                continue;
            }
            out.normals.push(row.coefficients.iter().map(|g| g / norm).collect());
            out.bounds.push(bound / norm);
            out.scale.push(norm);
            out.origin.push(Origin::Row(i));
        }
        for k in 0..n {
            for (sign, origin) in [(1.0, Origin::Upper(k)), (-1.0, Origin::Lower(k))] {
                let mut e = alloc::vec![0.0; n];
                e[k] = sign;
                out.normals.push(e);
                out.bounds.push(system.r_max[k]);
                out.scale.push(1.0);
                out.origin.push(origin);
            }
        }
        Ok(out)
    }

    fn violation(&self, i: usize, x: &[f64]) -> f64 {
        dot(&self.normals[i], x) - self.bounds[i]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Thin QR of the active normals by twice-applied modified Gram–Schmidt.
fn thin_qr(cols: &[&[f64]], n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let m = cols.len();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut r = alloc::vec![alloc::vec![0.0; m]; m];
    for (j, col) in cols.iter().enumerate() {
        let mut v = col.to_vec();
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = dot(qi, &v);
                r[i][j] += c;
                for k in 0..n {
                    v[k] -= c * qi[k];
                }
            }
        }
        let norm = math::sqrt(dot(&v, &v));
        r[j][j] = norm;
        q.push(v.iter().map(|x| x / norm).collect());
    }
    (q, r)
}

fn back_substitute(r: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let m = w.len();
    let mut x = alloc::vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = ((i + 1)..m).map(|k| r[i][k] * x[k]).sum();
        x[i] = (w[i] - s) / r[i][i];
    }
    x
}

struct Active {
    rows: Vec<usize>,
    lambda: Vec<f64>,
}

/// Dual active-set iteration from `x = x0`.
fn dual_active_set(
    rows: &Normalized,
    x0: &[f64],
) -> Result<(Vec<f64>, Active, usize), QpError> {
    let n = x0.len();
    let m = rows.normals.len();
    let max_iter = 10 * (m + n) + 50;
    let mut x = x0.to_vec();
    let mut active = Active {
        rows: Vec::new(),
        lambda: Vec::new(),
    };
    let mut iterations = 0;

    loop {
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..m {
            if active.rows.contains(&i) {
                continue;
            }
            let v = rows.violation(i, &x);
            if v > VIOLATION_TOL && worst.is_none_or(|(_, w)| v > w) {
                worst = Some((i, v));
            }
        }
        let Some((p, _)) = worst else {
            return Ok((x, active, iterations));
        };
        let np = &rows.normals[p];
        let mut lambda_p = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::IterationLimit);
            }
            let cols: Vec<&[f64]> = active.rows.iter().map(|&i| rows.normals[i].as_slice()).collect();
            let (q, r) = thin_qr(&cols, n);

            // z = -(I - Q Qᵀ) n_p, projected twice for accuracy.
            let mut z = np.clone();
            for _ in 0..2 {
                for qi in &q {
                    let c = dot(qi, &z);
                    for k in 0..n {
                        z[k] -= c * qi[k];
                    }
                }
            }
            for zk in z.iter_mut() {
                *zk = -*zk;
            }
            let w: Vec<f64> = q.iter().map(|qi| dot(qi, np)).collect();
            let dual_dir = back_substitute(&r, &w);

            let mut partial: Option<(usize, f64)> = None;
            for (k, (&lam, &rk)) in active.lambda.iter().zip(&dual_dir).enumerate() {
                if rk > 0.0 {
                    let t = lam / rk;
                    if partial.is_none_or(|(_, best)| t < best) {
                        partial = Some((k, t));
                    }
                }
            }
            let z_norm_sq = dot(&z, &z);
            let full = if math::sqrt(z_norm_sq) > DEPENDENT {
                Some(rows.violation(p, &x).max(0.0) / z_norm_sq)
            } else {
                None
            };

            let (t, drop) = match (full, partial) {
                (None, None) => return Err(QpError::Infeasible),
                (None, Some((k, t1))) => (t1, Some(k)),
                (Some(t2), Some((k, t1))) if t1 < t2 => (t1, Some(k)),
                (Some(t2), _) => (t2, None),
            };

            if full.is_some() {
                for k in 0..n {
                    x[k] += t * z[k];
                }
            }
            for (lam, rk) in active.lambda.iter_mut().zip(&dual_dir) {
                *lam = (*lam - t * rk).max(0.0);
            }
            lambda_p += t;

            match drop {
                None => {
                    active.rows.push(p);
                    active.lambda.push(lambda_p);
                    break;
                }
                Some(k) => {
                    active.rows.remove(k);
                    active.lambda.remove(k);
                }
            }
        }
    }
}

/// Largest normalized KKT violation: stationarity, primal and dual
/// feasibility, and complementarity.
fn kkt_residual(rows: &Normalized, x: &[f64], x0: &[f64], active: &Active) -> f64 {
    let mut grad: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
    let mut worst: f64 = 0.0;
    for (&i, &lam) in active.rows.iter().zip(&active.lambda) {
        for (g, nk) in grad.iter_mut().zip(&rows.normals[i]) {
            *g += lam * nk;
        }
        worst = worst.max(-lam).max((lam * rows.violation(i, x)).abs());
    }
    for g in &grad {
        worst = worst.max(g.abs());
    }
    for i in 0..rows.normals.len() {
        worst = worst.max(rows.violation(i, x));
    }
    worst
}

fn finish(
    problem: &QpProblem,
    rows: &Normalized,
    x: Vec<f64>,
    active: Active,
    iterations: usize,
    status: QpStatus,
    slack: f64,
) -> QpSolution {
    let kkt = kkt_residual(rows, &x, &problem.r_desired, &active);
    let n_rows = problem.system.rows.len();
    let mut multipliers = alloc::vec![0.0; n_rows];
    let mut active_set = Vec::new();
    let mut active_box = Vec::new();
    for (&i, &lam) in active.rows.iter().zip(&active.lambda) {
        match rows.origin[i] {
            Origin::Row(k) => {
                multipliers[k] = lam / rows.scale[i];
                active_set.push(k);
            }
            Origin::Upper(k) => active_box.push((k, 1)),
            Origin::Lower(k) => active_box.push((k, -1)),
        }
    }
    active_set.sort_unstable();
    active_box.sort_unstable();
    let slack_used = problem
        .system
        .rows
        .iter()
        .map(|row| row.residual(&x).max(0.0))
        .collect();
    QpSolution {
        r: x,
        status,
        active_set,
        active_box,
        multipliers,
        kkt_residual: kkt,
        slack,
        slack_used,
        iterations,
    }
}

fn solve_with_slack(problem: &QpProblem, slack: f64) -> Result<(Normalized, Vec<f64>, Active, usize), QpError> {
    let rows = Normalized::build(&problem.system, slack)?;
    let (x, active, it) = dual_active_set(&rows, &problem.r_desired)?;
    Ok((rows, x, active, it))
}

/// Exact minimizer, or `QpError::Infeasible` when the rows and box have no
/// common point.
pub fn solve(problem: &QpProblem) -> Result<QpSolution, QpError> {
    problem.check_dimensions()?;
    let (rows, x, active, it) = solve_with_slack(problem, 0.0)?;
    Ok(finish(problem, &rows, x, active, it, QpStatus::Optimal, 0.0))
}

/// Smallest uniform slack on the barrier rows that admits a point inside
/// the box, then the min-norm point at that slack. The box is never
/// loosened. Feasible problems are solved as-is.
pub fn relax(problem: &QpProblem) -> Result<QpSolution, QpError> {
    problem.check_dimensions()?;
    match solve_with_slack(problem, 0.0) {
        Ok((rows, x, active, it)) => {
            return Ok(finish(problem, &rows, x, active, it, QpStatus::Optimal, 0.0))
        }
        Err(QpError::Infeasible) => {}
        Err(e) => return Err(e),
    }

    let clamped: Vec<f64> = problem
        .r_desired
        .iter()
        .zip(&problem.system.r_max)
        .map(|(r, m)| r.clamp(-m, *m))
        .collect();
    let mut hi = problem
        .system
        .rows
        .iter()
        .map(|row| row.residual(&clamped))
        .fold(0.0, f64::max);
    let mut lo = 0.0;
    while hi - lo > SLACK_REL_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        match solve_with_slack(problem, mid) {
            Ok(_) => hi = mid,
            Err(QpError::Infeasible) => lo = mid,
            Err(e) => return Err(e),
        }
    }
    let (rows, x, active, it) = solve_with_slack(problem, hi)?;
    Ok(finish(
        problem,
        &rows,
        x,
        active,
        it,
        QpStatus::InfeasibleRelaxed,
        hi,
    ))
}

/// [`solve`], falling back to [`relax`] on infeasibility.
pub fn solve_or_relax(problem: &QpProblem) -> Result<QpSolution, QpError> {
    match solve(problem) {
        Err(QpError::Infeasible) => relax(problem),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::ConstraintRow;
    use crate::scbf::PairKind;

    fn row(g: &[f64], b: f64) -> ConstraintRow {
        ConstraintRow {
            coefficients: g.to_vec(),
            bound: b,
            source: PairKind::AgentAgent { i: 0, j: 1 },
            active_hint: true,
        }
    }

    fn problem(rd: &[f64], r_max: f64, rows: Vec<ConstraintRow>) -> QpProblem {
        let n = rd.len();
        QpProblem::new(
            rd.to_vec(),
            ConstraintSystem {
                rows,
                r_max: alloc::vec![r_max; n],
                n_agents: n,
            },
        )
    }

    #[test]
    fn no_rows_clamps() {
        let sol = solve(&problem(&[0.9, -0.1, -3.0], 0.5, Vec::new())).unwrap();
        assert_eq!(sol.r, [0.5, -0.1, -0.5]);
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_eq!(sol.active_box, [(0, 1), (2, -1)]);
    }

    #[test]
    fn single_row_projection() {
        let sol = solve(&problem(&[0.0], 0.5, alloc::vec![row(&[1.0], -0.2)])).unwrap();
        assert!((sol.r[0] + 0.2).abs() < 1e-15);
        assert_eq!(sol.active_set, [0]);
        assert!((sol.multipliers[0] - 0.2).abs() < 1e-15);
        assert!(sol.kkt_residual < 1e-12);
    }

    #[test]
    fn presatisfied_returns_desired_exactly() {
        let rd = [0.123456789, -0.3];
        let sol = solve(&problem(&rd, 0.5, alloc::vec![row(&[1.0, 1.0], 1.0)])).unwrap();
        assert_eq!(sol.r, rd);
        assert!(sol.active_set.is_empty());
    }

    #[test]
    fn two_rows_corner() {
        // r0 + r1 ≤ -0.2 and r0 - r1 ≤ -0.2 from r_d = 0: corner (-0.2, 0).
        let sol = solve(&problem(
            &[0.0, 0.0],
            0.5,
            alloc::vec![row(&[1.0, 1.0], -0.2), row(&[1.0, -1.0], -0.2)],
        ))
        .unwrap();
        assert!((sol.r[0] + 0.2).abs() < 1e-14 && sol.r[1].abs() < 1e-14);
        assert_eq!(sol.active_set, [0, 1]);
    }

    #[test]
    fn dropping_a_row_during_iteration() {
        // r1 ≤ -1 enters first; r0 + 2 r1 ≤ -3 then releases it.
        let sol = solve(&problem(
            &[0.0, 0.0],
            5.0,
            alloc::vec![row(&[0.0, 1.0], -1.0), row(&[1.0, 2.0], -3.0)],
        ))
        .unwrap();
        assert!((sol.r[0] + 0.6).abs() < 1e-14 && (sol.r[1] + 1.2).abs() < 1e-14);
        assert_eq!(sol.active_set, [1]);
        assert_eq!(sol.multipliers[0], 0.0);
        assert!(sol.kkt_residual < 1e-12);
    }

    #[test]
    fn infeasible_is_reported() {
        let p = problem(&[0.0], 0.5, alloc::vec![row(&[1.0], -1.0), row(&[-1.0], -1.0)]);
        assert_eq!(solve(&p), Err(QpError::Infeasible));
        let p = problem(&[0.0], 0.5, alloc::vec![row(&[1.0], -0.7)]);
        assert_eq!(solve(&p), Err(QpError::Infeasible));
        let p = problem(&[0.0], 0.5, alloc::vec![row(&[0.0], -0.1)]);
        assert_eq!(solve(&p), Err(QpError::Infeasible));
    }

    #[test]
    fn relax_contradictory_rows() {
        // r ≤ -1 + s and r ≥ 1 - s meet first at s = 1, r = 0.
        let p = problem(&[0.0], 0.5, alloc::vec![row(&[1.0], -1.0), row(&[-1.0], -1.0)]);
        let sol = relax(&p).unwrap();
        assert_eq!(sol.status, QpStatus::InfeasibleRelaxed);
        assert!((sol.slack - 1.0).abs() < 1e-8, "{}", sol.slack);
        assert!(sol.r[0].abs() < 1e-8);
        assert!(sol.slack_used.iter().all(|&s| (s - 1.0).abs() < 1e-8));
    }

    #[test]
    fn relax_keeps_box() {
        // Row demands r ≤ -0.7; the box stops at -0.5 so the slack is 0.2.
        let p = problem(&[0.3], 0.5, alloc::vec![row(&[1.0], -0.7)]);
        let sol = solve_or_relax(&p).unwrap();
        assert_eq!(sol.status, QpStatus::InfeasibleRelaxed);
        assert!((sol.slack - 0.2).abs() < 1e-8);
        assert!((sol.r[0] + 0.5).abs() < 1e-8);
        assert!(sol.r[0] >= -0.5);
    }

    #[test]
    fn relax_on_feasible_matches_solve() {
        let p = problem(&[0.4, 0.1], 0.5, alloc::vec![row(&[1.0, 2.0], 0.1)]);
        assert_eq!(relax(&p).unwrap(), solve(&p).unwrap());
    }

    #[test]
    fn dimension_mismatch() {
        let p = problem(&[0.0, 0.0], 0.5, alloc::vec![row(&[1.0], 0.0)]);
        assert_eq!(
            solve(&p),
            Err(QpError::DimensionMismatch {
                expected: 2,
                found: 1
            })
        );
    }
}
