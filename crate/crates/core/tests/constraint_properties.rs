use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scbf_core::constraints::{
    assemble, build_pairs, feasibility_margin, row_agent_agent, row_agent_obstacle, row_barycenter,
    ConstraintMode, FeasibilityParams,
};
use scbf_core::math::rot;
use scbf_core::scbf::{Mode, PairKind, SafetyPair, ScbfParams};
use scbf_core::{AgentLimits, AgentState, ObstacleState, Vec2};
use scbf_testkit::barriers::{self, BarrierSpec};
use scbf_testkit::fd::{self, StateLayout};
use scbf_testkit::sampling;

/// The row is `ḣ2 + γ2 h2 ≤ 0` rearranged; its left side minus the bound
/// must equal that expression for any heading rates.
const REL_TOL: f64 = 1e-5;

fn spec(d_min: f64, mode: Mode, p: &ScbfParams) -> BarrierSpec {
    BarrierSpec {
        d_min,
        q: mode.sign(),
        vartheta: p.vartheta,
        gamma0: p.alpha0.gain(),
    }
}

fn flow_direction(layout: &StateLayout, x: &[f64], r: &[f64], a: &[f64]) -> Vec<f64> {
    let mut dir = layout.drift(x);
    for i in 0..layout.n_agents {
        for (channel, value) in [(0, r[i]), (1, a[i])] {
            for (d, g) in dir.iter_mut().zip(layout.input_field(i, channel)) {
                *d += value * g;
            }
        }
    }
    dir
}

fn check_row(
    h: &dyn Fn(&[f64]) -> f64,
    layout: StateLayout,
    x: &[f64],
    row: &scbf_core::ConstraintRow,
    a: &[f64],
    gamma2: f64,
    rng: &mut ChaCha8Rng,
) {
    for _ in 0..4 {
        let r: Vec<f64> = (0..layout.n_agents).map(|_| rng.gen_range(-0.5..=0.5)).collect();
        let h2_dot = fd::directional(h, x, &flow_direction(&layout, x, &r, a), fd::DEFAULT_STEP);
        let lhs = row.residual(&r);
        let expected = h2_dot + gamma2 * h(x);
        let scale = lhs.abs().max(expected.abs()).max(1.0);
        assert!((lhs - expected).abs() <= REL_TOL * scale, "row {lhs} vs {expected}");
    }
}

#[test]
fn agent_obstacle_rows_match_finite_differences() {
    let p = ScbfParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let layout = StateLayout { n_agents: 1, n_obstacles: 1 };
    for k in 0..500 {
        let s = sampling::agent_state(&mut rng, 100.0);
        let o = sampling::obstacle_near(&mut rng, s.position(), (1.0, 150.0), 0.5, 0.05);
        let mode = if k % 2 == 0 { Mode::Positive } else { Mode::Negative };
        let mut pair = SafetyPair::new(PairKind::AgentObstacle { agent: 0, obstacle: 0 }, 15.0);
        pair.mode = mode;
        let a = [rng.gen_range(-0.25..=0.25)];
        let row = row_agent_obstacle(&pair, &[s], &[o], &a, &p).unwrap();
        let x = layout.pack(&[s], &[o]);
        let bs = spec(15.0, mode, &p);
        let h = |x: &[f64]| barriers::h2_agent_obstacle(&layout, x, 0, 0, &bs);
        check_row(&h, layout, &x, &row, &a, p.alpha2.gain(), &mut rng);
    }
}

#[test]
fn agent_agent_rows_match_finite_differences() {
    let p = ScbfParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let layout = StateLayout { n_agents: 2, n_obstacles: 0 };
    for k in 0..500 {
        let si = sampling::agent_state(&mut rng, 100.0);
        let sj = sampling::agent_near(&mut rng, si.position(), (1.0, 150.0));
        let mode = if k % 2 == 0 { Mode::Positive } else { Mode::Negative };
        let mut pair = SafetyPair::new(PairKind::AgentAgent { i: 0, j: 1 }, 10.0);
        pair.mode = mode;
        let a = [rng.gen_range(-0.25..=0.25), rng.gen_range(-0.25..=0.25)];
        let row = row_agent_agent(&pair, &[si, sj], &a, &p).unwrap();
        let x = layout.pack(&[si, sj], &[]);
        let bs = spec(10.0, mode, &p);
        let h = |x: &[f64]| barriers::h2_agent_agent(&layout, x, 0, 1, &bs);
        check_row(&h, layout, &x, &row, &a, p.alpha2.gain(), &mut rng);
    }
}

/// With parallel velocities the row coefficient coincides with the full
/// derivative, so the finite-difference identity holds exactly.
#[test]
fn barycenter_rows_match_finite_differences_for_parallel_headings() {
    let p = ScbfParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for k in 0..300 {
        let n = 2 + k % 6;
        let layout = StateLayout { n_agents: n, n_obstacles: 1 };
        let psi = rng.gen_range(-PI..PI);
        let agents: Vec<AgentState> = (0..n)
            .map(|_| {
                let s = sampling::agent_state(&mut rng, 60.0);
                AgentState::new(s.x, s.y, psi, s.u)
            })
            .collect();
        let p_b = agents.iter().fold(Vec2::ZERO, |acc, s| acc + s.position()) / n as f64;
        let o = sampling::obstacle_near(&mut rng, p_b, (5.0, 250.0), 0.5, 0.05);
        let mode = if k % 2 == 0 { Mode::Positive } else { Mode::Negative };
        let mut pair = SafetyPair::new(PairKind::BarycenterObstacle { obstacle: 0 }, 100.0);
        pair.mode = mode;
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.25..=0.25)).collect();
        let row = row_barycenter(&pair, &agents, &[o], &a, &p).unwrap();
        let x = layout.pack(&agents, &[o]);
        let bs = spec(100.0, mode, &p);
        let h = |x: &[f64]| barriers::h2_barycenter(&layout, x, 0, &bs);
        check_row(&h, layout, &x, &row, &a, p.alpha2.gain(), &mut rng);
    }
}

#[test]
fn barycenter_row_uses_the_rotated_heading_coefficient() {
    let p = ScbfParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for k in 0..500 {
        let n = 2 + k % 6;
        let agents: Vec<AgentState> = (0..n).map(|_| sampling::agent_state(&mut rng, 60.0)).collect();
        let p_b = agents.iter().fold(Vec2::ZERO, |acc, s| acc + s.position()) / n as f64;
        let v_b = agents.iter().fold(Vec2::ZERO, |acc, s| acc + s.velocity()) / n as f64;
        if v_b.norm() < 0.05 {
            continue;
        }
        let o = sampling::obstacle_near(&mut rng, p_b, (5.0, 250.0), 0.5, 0.05);
        let mode = if k % 2 == 0 { Mode::Positive } else { Mode::Negative };
        let mut pair = SafetyPair::new(PairKind::BarycenterObstacle { obstacle: 0 }, 100.0);
        pair.mode = mode;
        let a = vec![0.0; n];
        let row = row_barycenter(&pair, &agents, &[o], &a, &p).unwrap();
        let rel = o.p - p_b;
        for (k, s) in agents.iter().enumerate() {
            let v = s.velocity();
            let sv = Vec2::new(-v.y, v.x);
            let expected = 2.0 / n as f64 * rel.dot(rot(mode.sign() * p.vartheta).apply(sv));
            let got = row.coefficients[k];
            assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0), "{got} vs {expected}");
        }
    }
}

#[test]
fn single_agent_barycenter_row_equals_pair_row() {
    let p = ScbfParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    for _ in 0..500 {
        let s = sampling::agent_state(&mut rng, 100.0);
        let o = sampling::obstacle_near(&mut rng, s.position(), (1.0, 150.0), 0.5, 0.05);
        let a = [rng.gen_range(-0.25..=0.25)];
        let pair = SafetyPair::new(PairKind::AgentObstacle { agent: 0, obstacle: 0 }, 40.0);
        let bary = SafetyPair::new(PairKind::BarycenterObstacle { obstacle: 0 }, 40.0);
        let x = row_agent_obstacle(&pair, &[s], &[o], &a, &p).unwrap();
        let y = row_barycenter(&bary, &[s], &[o], &a, &p).unwrap();
        assert!((x.coefficients[0] - y.coefficients[0]).abs() <= 1e-12 * x.coefficients[0].abs().max(1.0));
        assert!((x.bound - y.bound).abs() <= 1e-12 * x.bound.abs().max(1.0));
    }
}

#[test]
fn identical_velocities_give_equal_barycenter_coefficients() {
    let p = ScbfParams::default();
    let agents: Vec<AgentState> = (0..5)
        .map(|k| AgentState::new(-10.0 * k as f64, 7.0 * k as f64 - 14.0, 0.1, 0.5))
        .collect();
    let o = ObstacleState { p: Vec2::new(300.0, 0.0), v: Vec2::new(-0.2, 0.0), a: Vec2::ZERO };
    let pair = SafetyPair::new(PairKind::BarycenterObstacle { obstacle: 0 }, 100.0);
    let row = row_barycenter(&pair, &agents, &[o], &[0.0; 5], &p).unwrap();
    for c in &row.coefficients {
        assert!((c - row.coefficients[0]).abs() <= 1e-12 * c.abs());
    }
}

#[test]
fn partner_coefficient_ignores_mode() {
    let p = ScbfParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    for _ in 0..500 {
        let si = sampling::agent_state(&mut rng, 100.0);
        let sj = sampling::agent_near(&mut rng, si.position(), (1.0, 150.0));
        let rows: Vec<_> = Mode::ALL
            .iter()
            .map(|&mode| {
                let mut pair = SafetyPair::new(PairKind::AgentAgent { i: 0, j: 1 }, 10.0);
                pair.mode = mode;
                row_agent_agent(&pair, &[si, sj], &[0.0, 0.0], &p).unwrap()
            })
            .collect();
        assert_eq!(rows[0].coefficients[1], rows[1].coefficients[1]);
    }
}

#[test]
fn head_on_gains() {
    let p = ScbfParams::default();
    let si = AgentState::new(0.0, 0.0, 0.0, 0.5);
    let sj = AgentState::new(20.0, 0.0, PI, 0.5);
    for mode in Mode::ALL {
        let mut pair = SafetyPair::new(PairKind::AgentAgent { i: 0, j: 1 }, 10.0);
        pair.mode = mode;
        let row = row_agent_agent(&pair, &[si, sj], &[0.0, 0.0], &p).unwrap();
        // 2 ρᵀ R(qϑ) S v_i with ρ = (20, 0), v_i = (0.5, 0).
        let expected = -2.0 * 20.0 * 0.5 * (mode.sign() * p.vartheta).sin();
        assert!((row.coefficients[0] - expected).abs() <= 1e-12);
        // The partner's turn is orthogonal to the line of sight.
        assert!(row.coefficients[1].abs() <= 1e-12);
    }
    // Off the line the partner gains leverage: -2 ρᵀ S v_j = -2 · 3 · (-0.5).
    let sj = AgentState::new(20.0, 3.0, PI, 0.5);
    let pair = SafetyPair::new(PairKind::AgentAgent { i: 0, j: 1 }, 10.0);
    let row = row_agent_agent(&pair, &[si, sj], &[0.0, 0.0], &p).unwrap();
    assert!((row.coefficients[1] - 3.0).abs() <= 1e-12, "{}", row.coefficients[1]);
}

#[test]
fn parallel_courses_leave_rows_inactive() {
    let p = ScbfParams::default();
    let si = AgentState::new(0.0, 0.0, 0.3, 0.5);
    let sj = AgentState::new(0.0, 25.0, 0.3, 0.5);
    for mode in Mode::ALL {
        let mut pair = SafetyPair::new(PairKind::AgentAgent { i: 0, j: 1 }, 10.0);
        pair.mode = mode;
        let row = row_agent_agent(&pair, &[si, sj], &[0.0, 0.0], &p).unwrap();
        assert!(row.residual(&[0.0, 0.0]) < 0.0);
    }
}

#[test]
fn far_obstacle_rows_are_inactive_over_the_box() {
    let p = ScbfParams::default();
    let s = AgentState::new(0.0, 0.0, 0.0, 0.5);
    let o = ObstacleState { p: Vec2::new(150.0, 0.0), v: Vec2::ZERO, a: Vec2::ZERO };
    let pair = SafetyPair::new(PairKind::AgentObstacle { agent: 0, obstacle: 0 }, 15.0);
    let row = row_agent_obstacle(&pair, &[s], &[o], &[0.0], &p).unwrap();
    assert!(row.bound > 0.0);
    for r in [-0.5, 0.0, 0.5] {
        assert!(row.residual(&[r]) < 0.0);
    }
}

#[test]
fn assembly_is_bitwise_repeatable() {
    let p = ScbfParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let agents: Vec<AgentState> = (0..5).map(|_| sampling::agent_state(&mut rng, 80.0)).collect();
    let obstacles: Vec<ObstacleState> = (0..2)
        .map(|_| sampling::obstacle_near(&mut rng, Vec2::ZERO, (150.0, 200.0), 0.2, 0.0))
        .collect();
    let limits = vec![AgentLimits::default(); 5];
    let a = vec![0.1; 5];
    for mode in [ConstraintMode::Pairwise, ConstraintMode::Barycenter, ConstraintMode::Both] {
        let pairs = build_pairs(5, &[15.0, 12.0], 10.0, mode);
        let (x, _) = assemble(&pairs, &agents, &obstacles, &a, &limits, &p).unwrap();
        let (y, _) = assemble(&pairs, &agents, &obstacles, &a, &limits, &p).unwrap();
        assert_eq!(x, y);
        let bits = |s: &scbf_core::ConstraintSystem| -> Vec<u64> {
            s.rows
                .iter()
                .flat_map(|r| r.coefficients.iter().chain([&r.bound]).map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&x), bits(&y));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn margin_is_monotone_in_each_beta(
        beta1 in 0.0..10.0f64,
        beta2 in 0.0..10.0f64,
        beta3 in 0.0..10.0f64,
        bump in 0.0..5.0f64,
        vartheta in 0.01..1.56f64,
    ) {
        let base = FeasibilityParams { beta1, beta2, beta3, gamma: 0.1, u_omax: 0.2, a_omax: 0.0 };
        let m = base.margin_at(vartheta);
        let m2 = FeasibilityParams { beta2: beta2 + bump, ..base }.margin_at(vartheta);
        let m3 = FeasibilityParams { beta3: beta3 + bump, ..base }.margin_at(vartheta);
        prop_assert!(m2 <= m && m3 <= m);
        // β1 multiplies 4 sin²ϑ - √5 sinϑ, which is negative below sinϑ = √5/4.
        let up = FeasibilityParams { beta1: beta1 + bump, ..base }.margin_at(vartheta);
        if 4.0 * vartheta.sin() >= 5f64.sqrt() {
            prop_assert!(up >= m);
        } else {
            prop_assert!(up <= m);
        }
    }

    #[test]
    fn margin_is_the_grid_maximum(gamma in 0.01..2.0f64, u_omax in 0.0..1.0f64) {
        let params = FeasibilityParams::new(&AgentLimits::default(), 10.0, gamma, u_omax, 0.0);
        let report = feasibility_margin(params, 1_000);
        for k in 1..=1_000 {
            let th = std::f64::consts::FRAC_PI_2 * k as f64 / 1_001.0;
            prop_assert!(params.margin_at(th) <= report.margin);
        }
        prop_assert_eq!(params.margin_at(report.argmax_vartheta), report.margin);
    }
}
