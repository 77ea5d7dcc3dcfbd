use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scbf_core::qp::{self, QpStatus};
use scbf_testkit::qp_oracle::qp_grid_oracle;
use scbf_testkit::sampling::feasible_qp;

#[test]
fn random_problems_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..300 {
        let n = rng.gen_range(1..=5);
        let m = rng.gen_range(0..=20);
        let p = feasible_qp(&mut rng, n, m);
        let sol = qp::solve(&p).expect("feasible by construction");
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!(sol.kkt_residual < 1e-7, "kkt {}", sol.kkt_residual);
        let oracle = qp_grid_oracle(&p, 1e-3);
        let r = oracle.point().unwrap_or_else(|| panic!("oracle found nothing for {p:?}, solver {:?}", sol.r));
        let err = sol
            .r
            .iter()
            .zip(r)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err);
        assert!(err <= 1e-3, "solver {:?} oracle {:?}", sol.r, r);
    }
    assert!(worst < 1e-4, "worst deviation {worst}");
}

#[test]
fn active_rows_are_tight_and_inactive_have_zero_multipliers() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let n = rng.gen_range(1..=5);
        let m = rng.gen_range(0..=20);
        let p = feasible_qp(&mut rng, n, m);
        let sol = qp::solve(&p).unwrap();
        for (k, row) in p.system.rows.iter().enumerate() {
            let res = row.residual(&sol.r);
            assert!(res <= 1e-8);
            if sol.active_set.contains(&k) {
                assert!(res.abs() <= 1e-8, "active row residual {res}");
                assert!(sol.multipliers[k] >= 0.0);
            } else {
                assert_eq!(sol.multipliers[k], 0.0);
            }
        }
    }
}

#[test]
fn row_permutation_does_not_change_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let n = rng.gen_range(1..=5);
        let m = rng.gen_range(2..=20);
        let p = feasible_qp(&mut rng, n, m);
        let mut q = p.clone();
        q.system.rows.reverse();
        let a = qp::solve(&p).unwrap();
        let b = qp::solve(&q).unwrap();
        for (x, y) in a.r.iter().zip(&b.r) {
            assert!((x - y).abs() <= 1e-10);
        }
    }
}

#[test]
fn presatisfied_problems_return_desired_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let n = rng.gen_range(1..=5);
        let m = rng.gen_range(0..=20);
        let mut p = feasible_qp(&mut rng, n, m);
        p.r_desired = p.system.r_max.iter().map(|m| rng.gen_range(-m..*m)).collect();
        let rd = p.r_desired.clone();
        for row in p.system.rows.iter_mut() {
            let at: f64 = row.coefficients.iter().zip(&rd).map(|(g, x)| g * x).sum();
            row.bound = row.bound.max(at + 1e-6);
        }
        let sol = qp::solve(&p).unwrap();
        assert_eq!(sol.r, rd);
    }
}

#[test]
fn relaxation_never_loosens_the_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..200 {
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=10);
        let mut p = feasible_qp(&mut rng, n, m);
        for row in p.system.rows.iter_mut() {
            row.bound -= rng.gen_range(0.0..50.0);
        }
        let sol = qp::solve_or_relax(&p).unwrap();
        for (x, m) in sol.r.iter().zip(&p.system.r_max) {
            assert!(x.abs() <= m + 1e-12);
        }
        for row in &p.system.rows {
            assert!(row.residual(&sol.r) <= sol.slack + 1e-8);
        }
        if sol.status == QpStatus::InfeasibleRelaxed {
            // A visibly smaller slack must be infeasible.
            let mut tighter = p.clone();
            for row in tighter.system.rows.iter_mut() {
                row.bound += sol.slack * (1.0 - 1e-6) - 1e-9;
            }
            assert!(qp::solve(&tighter).is_err());
        }
    }
}
