use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scbf_core::math::{rot, wrap_angle, Mat2, Rot2};
use scbf_core::scbf::{self, Encounter, HysteresisRule, Mode, PairKind, SafetyPair, ScbfParams};
use scbf_core::{AgentState, ObstacleState, Vec2};
use scbf_testkit::sampling;

fn params() -> ScbfParams {
    ScbfParams::default()
}

fn mode_strategy() -> impl Strategy<Value = Mode> {
    prop_oneof![Just(Mode::Positive), Just(Mode::Negative)]
}

fn agent_strategy() -> impl Strategy<Value = AgentState> {
    (-100.0..100.0f64, -100.0..100.0f64, -PI..PI, 0.3..=0.8f64)
        .prop_map(|(x, y, psi, u)| AgentState::new(x, y, psi, u))
}

#[test]
fn h1_never_exceeds_h2() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..100_000 {
        let a = sampling::agent_state(&mut rng, 100.0);
        let enc = if k % 2 == 0 {
            let o = sampling::obstacle_near(&mut rng, a.position(), (0.5, 200.0), 0.5, 0.1);
            Encounter::agent_obstacle(0, &a, &o, 15.0)
        } else {
            let b = sampling::agent_near(&mut rng, a.position(), (0.5, 200.0));
            Encounter::agent_agent(0, &a, 1, &b, 10.0)
        };
        let h1 = enc.h1(&p);
        for mode in Mode::ALL {
            let gap = h1 - enc.h2(mode, &p);
            worst = worst.max(gap);
            assert!(gap <= 1e-9 * h1.abs().max(1.0), "h1 {h1} above h2 by {gap} (k = {k})");
        }
    }
    assert!(worst <= 0.0 || worst < 1e-9);
}

/// Heading that zeroes the heading-rate gain of `mode`.
fn critical_heading(enc: &Encounter, mode: Mode, p: &ScbfParams) -> f64 {
    enc.relative_position().angle() - mode.sign() * p.vartheta
}

#[test]
fn synergy_gap_holds_at_critical_configurations() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for k in 0..10_000 {
        let a = sampling::agent_state(&mut rng, 100.0);
        let mode = if k % 2 == 0 { Mode::Positive } else { Mode::Negative };
        let (enc, critical) = if k % 4 < 2 {
            let mut o = sampling::obstacle_near(&mut rng, a.position(), (1.0, 200.0), 0.5, 0.1);
            o.v = Vec2::ZERO;
            let probe = Encounter::agent_obstacle(0, &a, &o, 15.0);
            let psi = critical_heading(&probe, mode, &p);
            let s = AgentState::new(a.x, a.y, psi, a.u);
            (Encounter::agent_obstacle(0, &s, &o, 15.0), s)
        } else {
            // Partner heads along the line of sight, as in the agent-agent
            // critical set.
            let b = sampling::agent_near(&mut rng, a.position(), (1.0, 200.0));
            let los = (b.position() - a.position()).angle();
            let b = AgentState::new(b.x, b.y, los, b.u);
            let probe = Encounter::agent_agent(0, &a, 1, &b, 10.0);
            let psi = critical_heading(&probe, mode, &p);
            let s = AgentState::new(a.x, a.y, psi, a.u);
            (Encounter::agent_agent(0, &s, 1, &b, 10.0), s)
        };
        let headroom = enc.h2(mode, &p) - enc.min_mode(mode, &p).0;
        let mu = scbf::synergy_gap_lower_bound(critical.u, enc.distance(), &p);
        assert!(headroom >= mu - 1e-9 * mu.max(1.0), "headroom {headroom} below {mu}");
    }
}

#[test]
fn critical_configuration_always_triggers_a_jump() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for k in 0..2_000 {
        let a = sampling::agent_state(&mut rng, 100.0);
        let mut o = sampling::obstacle_near(&mut rng, a.position(), (1.0, 200.0), 0.0, 0.0);
        o.v = Vec2::ZERO;
        let mode = if k % 2 == 0 { Mode::Positive } else { Mode::Negative };
        let probe = Encounter::agent_obstacle(0, &a, &o, 12.0);
        let s = AgentState::new(a.x, a.y, critical_heading(&probe, mode, &p), a.u);
        let enc = Encounter::agent_obstacle(0, &s, &o, 12.0);
        let mut pair = SafetyPair::new(PairKind::AgentObstacle { agent: 0, obstacle: 0 }, 12.0);
        pair.mode = mode;
        let jump = pair.jump_update(&enc, &p).unwrap().expect("critical state must jump");
        assert_eq!(jump.to, mode.flipped());
        assert!(jump.h2_before - jump.h2_after >= jump.delta);
    }
}

#[test]
fn heading_gain_vanishes_only_at_critical_orientation() {
    let p = params();
    let o = ObstacleState {
        p: Vec2::new(40.0, 25.0),
        v: Vec2::ZERO,
        a: Vec2::ZERO,
    };
    let probe = Encounter::agent_obstacle(0, &AgentState::new(0.0, 0.0, 0.0, 0.5), &o, 12.0);
    for mode in Mode::ALL {
        let critical = critical_heading(&probe, mode, &p);
        let n = 20_000;
        let mut sign_changes = Vec::new();
        let gain_at = |psi: f64| {
            let s = AgentState::new(0.0, 0.0, psi, 0.5);
            Encounter::agent_obstacle(0, &s, &o, 12.0).eval(mode, &p).unwrap().gains[0].r
        };
        let mut prev = gain_at(-PI);
        for k in 1..=n {
            let psi = -PI + 2.0 * PI * k as f64 / n as f64;
            let g = gain_at(psi);
            if g == 0.0 || g.signum() != prev.signum() {
                sign_changes.push(psi);
            }
            prev = g;
        }
        // Zeros of the gain are the critical heading and its reversal.
        assert_eq!(sign_changes.len(), 2, "{sign_changes:?}");
        let step = 2.0 * PI / n as f64;
        for z in sign_changes {
            let off = wrap_angle(z - critical).radians().abs();
            assert!(off <= step || (PI - off) <= step, "zero at {z}, critical {critical}");
        }
        let g = gain_at(critical);
        assert!(g.abs() <= 1e-12 * 2.0 * o.p.norm() * 0.5);
    }
}

#[test]
fn shift_limit_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let states: Vec<(AgentState, ObstacleState)> = (0..500)
        .map(|_| {
            let a = sampling::agent_state(&mut rng, 100.0);
            let o = sampling::obstacle_near(&mut rng, a.position(), (1.0, 150.0), 0.5, 0.0);
            (a, o)
        })
        .collect();
    let worst = |vartheta: f64| {
        let p = ScbfParams {
            vartheta,
            ..params()
        };
        states
            .iter()
            .map(|(a, o)| {
                let enc = Encounter::agent_obstacle(0, a, o, 15.0);
                Mode::ALL
                    .iter()
                    .map(|&m| (enc.h2(m, &p) - enc.h1(&p)).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    };
    let (e1, e2, e3) = (worst(1e-2), worst(5e-3), worst(2.5e-3));
    assert!(e3 < e2 && e2 < e1);
    for ratio in [e1 / e2, e2 / e3] {
        assert!((1.9..2.1).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn barycenter_of_one_agent_reduces_to_the_pair() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for _ in 0..1_000 {
        let a = sampling::agent_state(&mut rng, 100.0);
        let o = sampling::obstacle_near(&mut rng, a.position(), (1.0, 150.0), 0.5, 0.05);
        let single = Encounter::agent_obstacle(0, &a, &o, 40.0);
        let bary = Encounter::barycenter(&[a], &o, 40.0);
        for mode in Mode::ALL {
            let x = single.eval(mode, &p).unwrap();
            let y = bary.eval(mode, &p).unwrap();
            let tol = |v: f64| 1e-12 * v.abs().max(1.0);
            assert!((x.h2 - y.h2).abs() <= tol(x.h2));
            assert!((x.lf - y.lf).abs() <= tol(x.lf));
            assert!((x.gains[0].r - y.gains[0].r).abs() <= tol(x.gains[0].r));
            assert!((x.gains[0].a - y.gains[0].a).abs() <= tol(x.gains[0].a));
        }
    }
}

#[test]
fn min_mode_matches_brute_force() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    for _ in 0..10_000 {
        let a = sampling::agent_state(&mut rng, 100.0);
        let b = sampling::agent_near(&mut rng, a.position(), (1.0, 150.0));
        let enc = Encounter::agent_agent(0, &a, 1, &b, 10.0);
        let current = if rng.gen_bool(0.5) { Mode::Positive } else { Mode::Negative };
        let (m2, arg) = enc.min_mode(current, &p);
        let hp = enc.h2(Mode::Positive, &p);
        let hn = enc.h2(Mode::Negative, &p);
        assert_eq!(m2, hp.min(hn));
        if (hp - hn).abs() >= 1e-12 {
            assert_eq!(arg, if hp < hn { Mode::Positive } else { Mode::Negative });
        } else {
            assert_eq!(arg, current);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn hysteresis_is_half_the_gap(u in 0.3..=0.8f64, d in 0.1..500.0f64, vartheta in 0.01..(FRAC_PI_2 - 0.01)) {
        let p = ScbfParams { vartheta, hysteresis: HysteresisRule::default(), ..params() };
        let mu = scbf::synergy_gap_lower_bound(u, d, &p);
        let delta = scbf::hysteresis_width(u, d, &p);
        prop_assert!(delta < mu);
        prop_assert!((delta / mu - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn jumps_decrease_h2_by_at_least_delta(a in agent_strategy(), b in agent_strategy(), mode in mode_strategy()) {
        prop_assume!((a.position() - b.position()).norm() > 0.5);
        let p = params();
        let enc = Encounter::agent_agent(0, &a, 1, &b, 10.0);
        let mut pair = SafetyPair::new(PairKind::AgentAgent { i: 0, j: 1 }, 10.0);
        pair.mode = mode;
        let before = enc.h2(mode, &p);
        match pair.jump_update(&enc, &p).unwrap() {
            Some(j) => {
                prop_assert_eq!(j.h2_before, before);
                prop_assert!(before - enc.h2(pair.mode, &p) >= enc.hysteresis_width(&p));
            }
            None => {
                prop_assert_eq!(pair.mode, mode);
                let (m2, arg) = enc.min_mode(mode, &p);
                prop_assert!(before - m2 < enc.hysteresis_width(&p) || arg == mode);
            }
        }
    }

    #[test]
    fn second_update_never_jumps_back(a in agent_strategy(), b in agent_strategy(), mode in mode_strategy()) {
        prop_assume!((a.position() - b.position()).norm() > 0.5);
        let p = params();
        let enc = Encounter::agent_agent(0, &a, 1, &b, 10.0);
        let mut pair = SafetyPair::new(PairKind::AgentAgent { i: 0, j: 1 }, 10.0);
        pair.mode = mode;
        pair.jump_update(&enc, &p).unwrap();
        prop_assert!(pair.jump_update(&enc, &p).unwrap().is_none());
    }

    #[test]
    fn rotations_compose(a in -10.0..10.0f64, b in -10.0..10.0f64) {
        let lhs = rot(a).compose(rot(b)).matrix();
        let rhs = rot(wrap_angle(a + b).radians()).matrix();
        for (x, y) in lhs.m.iter().flatten().zip(rhs.m.iter().flatten()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn shift_matrix_bound(vartheta in 1e-6..(FRAC_PI_2 - 1e-6)) {
        let r = rot(vartheta).matrix();
        let delta = Mat2::IDENTITY - r;
        prop_assert!(delta.norm2() <= 2.0 * vartheta.sin() + 1e-12);
    }
}

fn lambda(vartheta: f64) -> Mat2 {
    let r = rot(vartheta).matrix();
    r - r.transpose() - Rot2::QUARTER.matrix() * r
}

/// The √5·sinϑ bound on ‖Λ‖ only holds for the positive shift and
/// ϑ ≥ atan(1/4); below that, and for every negative shift, it fails.
#[test]
fn lambda_bound_region() {
    let threshold = 0.25f64.atan();
    let n = 10_000;
    for k in 1..n {
        let vartheta = FRAC_PI_2 * k as f64 / n as f64;
        let bound = 5f64.sqrt() * vartheta.sin();
        let (s, c) = vartheta.sin_cos();
        let pos = lambda(vartheta).norm2();
        let neg = lambda(-vartheta).norm2();
        assert!((pos - (1.0 + 4.0 * s * s - 4.0 * s * c).sqrt()).abs() < 1e-12);
        assert!((neg - (1.0 + 4.0 * s * s + 4.0 * s * c).sqrt()).abs() < 1e-12);
        if (vartheta - threshold).abs() > 1e-9 {
            assert_eq!(pos <= bound + 1e-12, vartheta > threshold, "ϑ = {vartheta}");
        }
        assert!(neg > bound);
    }
    assert!((lambda(FRAC_PI_2).norm2() - 5f64.sqrt()).abs() < 1e-12);
}
