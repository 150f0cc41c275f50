use clfqp_core::linalg::{self, Matrix};
use clfqp_core::resclf::*;
use clfqp_testkit::{max_real_eigenvalue, sym_eigenvalues};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Draw {
    kp: Vec<f64>,
    kd: Vec<f64>,
    q: Matrix,
    eps: f64,
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let mut q = a.matmul(&a.transpose()).add(&Matrix::identity(n).scale(0.1));
    q.symmetrize();
    q
}

fn draw(rng: &mut ChaCha8Rng) -> Draw {
    let m = rng.random_range(1..=4);
    Draw {
        kp: (0..m).map(|_| rng.random_range(0.1..20.0)).collect(),
        kd: (0..m).map(|_| rng.random_range(0.1..20.0)).collect(),
        q: random_spd(rng, 2 * m),
        eps: rng.random_range(0.01..0.99),
    }
}

#[test]
fn lyapunov_construction_on_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let d = draw(&mut rng);
        let clf = build_resclf(&d.kp, &d.kd, &d.q, d.eps).unwrap();
        let res = lyapunov_residual(&clf.a, &clf.p, &d.q);
        assert!(res < 1e-10 * d.q.norm_inf(), "residual {res:e}");
        // eigenvalues from an independent implementation
        assert!(max_real_eigenvalue(&clf.a) < 0.0);
        let ev = sym_eigenvalues(&clf.p);
        assert!(ev[0] > 0.0);
        assert!(sym_eigenvalues(&clf.peps)[0] > 0.0);
        assert!((clf.c1 - ev[0]).abs() <= 1e-9 * ev[ev.len() - 1]);
        assert!((clf.c2 - ev[ev.len() - 1]).abs() <= 1e-9 * ev[ev.len() - 1]);
        let qmin = sym_eigenvalues(&d.q)[0];
        assert!((clf.c3 - qmin / clf.c2).abs() <= 1e-9 * clf.c3);
    }
}

fn clf_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64, Vec<f64>)> {
    (1usize..=3).prop_flat_map(|m| {
        (
            prop::collection::vec(0.2f64..10.0, m),
            prop::collection::vec(0.2f64..10.0, m),
            0.05f64..0.9,
            prop::collection::vec(-3.0f64..3.0, 2 * m),
        )
    })
}

proptest! {
    #[test]
    fn v_is_sandwiched_by_the_eigenvalue_bounds((kp, kd, eps, eta) in clf_strategy()) {
        let m = kp.len();
        let clf = build_resclf(&kp, &kd, &Matrix::identity(2 * m), eps).unwrap();
        let v = eval_v(&clf, &eta);
        let nn = linalg::dot(&eta, &eta);
        prop_assert!(v >= clf.c1 * nn * (1.0 - 1e-12) - 1e-15);
        prop_assert!(v <= clf.c2 / (eps * eps) * nn * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn psi1_is_the_gradient_of_v_along_the_input_directions((kp, kd, eps, eta) in clf_strategy()) {
        let m = kp.len();
        let clf = build_resclf(&kp, &kd, &Matrix::identity(2 * m), eps).unwrap();
        let psi = eval_psi(&clf, &eta);
        let h = 1e-6;
        for i in 0..m {
            let mut ep = eta.clone();
            let mut em = eta.clone();
            ep[m + i] += h;
            em[m + i] -= h;
            let fd = (eval_v(&clf, &ep) - eval_v(&clf, &em)) / (2.0 * h);
            prop_assert!((fd - psi.psi1[i]).abs() <= 1e-6 * (1.0 + psi.psi1[i].abs()), "{} vs {}", fd, psi.psi1[i]);
        }
    }

    #[test]
    fn psi_predicts_the_rate_of_v((kp, kd, eps, eta) in clf_strategy(), mu_seed in prop::collection::vec(-3.0f64..3.0, 3)) {
        let m = kp.len();
        let clf = build_resclf(&kp, &kd, &Matrix::identity(2 * m), eps).unwrap();
        let mu = &mu_seed[..m];
        // η̇ = Fη + Gμ
        let mut etadot = vec![0.0; 2 * m];
        etadot[..m].copy_from_slice(&eta[m..]);
        etadot[m..].copy_from_slice(mu);
        let h = 1e-6;
        let shift = |s: f64| eta.iter().zip(&etadot).map(|(a, b)| a + s * b).collect::<Vec<_>>();
        let fd = (eval_v(&clf, &shift(h)) - eval_v(&clf, &shift(-h))) / (2.0 * h);
        let psi = eval_psi(&clf, &eta);
        let pred = psi.psi0 - clf.decay_rate() * eval_v(&clf, &eta) + linalg::dot(&psi.psi1, mu);
        prop_assert!((fd - pred).abs() <= 1e-6 * (1.0 + pred.abs()), "{} vs {}", fd, pred);
    }

    #[test]
    fn epsilon_scaling_only_touches_the_position_block(kp in 0.2f64..10.0, kd in 0.2f64..10.0, eps in 0.05f64..0.9) {
        let clf = build_resclf(&[kp], &[kd], &Matrix::identity(2), eps).unwrap();
        prop_assert!((clf.peps[(0, 0)] - clf.p[(0, 0)] / (eps * eps)).abs() <= 1e-12 * clf.peps[(0, 0)]);
        prop_assert!((clf.peps[(0, 1)] - clf.p[(0, 1)] / eps).abs() <= 1e-12 * (1.0 + clf.peps[(0, 1)].abs()));
        prop_assert_eq!(clf.peps[(1, 1)], clf.p[(1, 1)]);
    }
}

#[test]
fn unstable_gains_are_rejected() {
    let a = closed_loop_matrix(&[1.0], &[1.0]).scale(-1.0);
    assert!(matches!(solve_lyapunov(&a, &Matrix::identity(2)), Err(clfqp_core::Error::NotHurwitz { .. })));
    assert!(build_resclf(&[1.0], &[-1.0], &Matrix::identity(2), 0.5).is_err());
    assert!(build_resclf(&[1.0], &[1.0], &Matrix::identity(2), 0.0).is_err());
}
