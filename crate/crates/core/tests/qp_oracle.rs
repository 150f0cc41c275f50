use clfqp_core::qp::{kkt_residual, solve_qp, QpSolver, QpStatus};
use clfqp_testkit::{active_set_oracle, random_feasible_qp};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn random_qps_match_active_set_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_obj = 0.0f64;
    let mut worst_feas = 0.0f64;
    for case in 0..1000 {
        let nv = rng.random_range(1..=6);
        let nc = rng.random_range(1..=12);
        let p = random_feasible_qp(&mut rng, nv, nc);
        let oracle = active_set_oracle(&p, 1e-9).expect("generator problems are feasible");
        let sol = solve_qp(&p, 60, 1e-10);
        assert_eq!(sol.status, QpStatus::Optimal, "case {case}: {sol:?}");
        let d = (p.objective(&sol.x) - oracle.objective).abs() / (1.0 + oracle.objective.abs());
        worst_obj = worst_obj.max(d);
        worst_feas = worst_feas.max(p.max_violation(&sol.x));
        assert!(d < 1e-8, "case {case}: objective off by {d:e}");
        assert!(p.max_violation(&sol.x) < 1e-8, "case {case}");
    }
    eprintln!("worst relative objective gap {worst_obj:e}, worst violation {worst_feas:e}");
}

#[test]
fn default_settings_converge_within_the_iteration_cap() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut optimal = 0;
    for _ in 0..300 {
        let (nv, nc) = (rng.random_range(1..=6), rng.random_range(1..=12));
        let p = random_feasible_qp(&mut rng, nv, nc);
        let sol = solve_qp(&p, 20, 1e-7);
        if sol.status == QpStatus::Optimal {
            optimal += 1;
            assert!(sol.primal_residual.max(sol.dual_residual).max(sol.gap) <= 1e-7);
        }
    }
    assert!(optimal >= 297, "only {optimal} of 300 converged in 20 iterations");
}

#[test]
fn merit_is_monotone_after_two_iterations() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut solver = QpSolver::new();
    solver.set_trace(true);
    for _ in 0..200 {
        let (nv, nc) = (rng.random_range(1..=6), rng.random_range(1..=12));
        let p = random_feasible_qp(&mut rng, nv, nc);
        solver.solve(&p, 40, 1e-10);
        let tr = solver.trace();
        for w in tr.windows(2).skip(1) {
            assert!(w[1].merit <= w[0].merit * (1.0 + 1e-12), "{:?}", tr);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solve_is_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_feasible_qp(&mut rng, 4, 8);
        let a = solve_qp(&p, 20, 1e-7);
        let b = solve_qp(&p, 20, 1e-7);
        prop_assert_eq!(a.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn optimal_points_satisfy_kkt(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_feasible_qp(&mut rng, 3, 6);
        let sol = solve_qp(&p, 60, 1e-10);
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        let (pr, du, comp) = kkt_residual(&p, &sol.x, &sol.lambda);
        prop_assert!(pr < 1e-8 && du < 1e-6 && comp < 1e-6, "{} {} {}", pr, du, comp);
    }
}
