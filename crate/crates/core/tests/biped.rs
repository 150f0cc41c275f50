use clfqp_core::bezier::Bezier;
use clfqp_core::clfqp::*;
use clfqp_core::linalg;
use clfqp_core::mechsys::{transverse_state, MechState};
use clfqp_core::models::gait::{on_zero_dynamics, poincare_jacobian, poincare_map, simulate_step};
use clfqp_core::models::PlantModel;
use clfqp_testkit::{default_walker, to_na};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params() -> &'static clfqp_core::models::BipedParams {
    match &default_walker().model.plant {
        PlantModel::ThreeLinkBiped(p) => p,
        _ => unreachable!(),
    }
}

#[test]
fn designed_gait_is_a_fixed_point() {
    let w = default_walker();
    let cfg = ControllerConfig::min_norm(w.clf.clone());
    let x = &w.gait.fixed_point;
    let p = poincare_map(&w.model, &w.gait.outmap, &cfg, x, 2.0 * w.gait.step_period).unwrap();
    assert!(p.distance(x) < 1e-6, "residual {:e}", p.distance(x));
    assert!(w.gait.diagnostics.fixed_point_residual < 1e-6);
}

#[test]
fn designed_gait_is_locally_stable() {
    let w = default_walker();
    let cfg = ControllerConfig::min_norm(w.clf.clone());
    let jac = poincare_jacobian(&w.model, &w.gait.outmap, &cfg, &w.gait.fixed_point, 2.0 * w.gait.step_period).unwrap();
    // spectrum from an independent eigen-solver
    let rho = to_na(&jac).complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max);
    assert!(rho < 1.0, "spectral radius {rho}");
    assert!((rho - w.gait.diagnostics.spectral_radius).abs() < 1e-6);
}

#[test]
fn perturbed_iterates_contract() {
    let w = default_walker();
    let cfg = ControllerConfig::min_norm(w.clf.clone());
    let mut x = w.gait.fixed_point.clone();
    for v in x.dq.iter_mut() {
        *v += 1e-3;
    }
    let d0 = x.distance(&w.gait.fixed_point);
    for _ in 0..8 {
        x = poincare_map(&w.model, &w.gait.outmap, &cfg, &x, 2.0 * w.gait.step_period).unwrap();
    }
    assert!(x.distance(&w.gait.fixed_point) < 0.5 * d0);
}

#[test]
fn outputs_vanish_along_the_orbit() {
    let w = default_walker();
    let cfg = ControllerConfig::min_norm(w.clf.clone());
    let tr = simulate_step(&w.model, &w.gait.outmap, &cfg, &w.gait.fixed_point, 2.0 * w.gait.step_period, true).unwrap();
    let worst = tr.samples.iter().map(|s| s.2).fold(0.0, f64::max);
    assert!(worst < 1e-6, "max |eta| {worst:e}");
    // the phase advances monotonically
    assert!(tr.samples.windows(2).all(|p| p[1].0 > p[0].0));
}

#[test]
fn post_impact_state_lies_on_the_zero_dynamics() {
    let w = default_walker();
    let eta = transverse_state(&w.gait.outmap, &w.gait.fixed_point).unwrap().eta;
    assert!(linalg::norm_inf(&eta) < 1e-6);
}

#[test]
fn ustar_regression_is_accurate() {
    let d = &default_walker().gait.diagnostics;
    assert!(d.ustar_span > 0.0);
    assert!(d.ustar_fit_residual < 0.05 * d.ustar_span, "{} vs span {}", d.ustar_fit_residual, d.ustar_span);
}

#[test]
fn bezier_refit_recovers_control_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let truth = Bezier::new(
        (0..2).map(|_| core::array::from_fn(|_| rng.random_range(-50.0..50.0))).collect(),
    );
    let range = (-0.2, 0.2);
    let thetas: Vec<f64> = (0..200).map(|k| range.0 + (range.1 - range.0) * k as f64 / 199.0).collect();
    let rows: Vec<Vec<f64>> = (0..2)
        .map(|i| thetas.iter().map(|t| truth.eval((t - range.0) / (range.1 - range.0))[i]).collect())
        .collect();
    let fit = fit_bezier_ustar(&thetas, &rows, range).unwrap();
    for (a, b) in fit.points().iter().zip(truth.points()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }
}

#[test]
fn impacts_never_add_kinetic_energy() {
    let w = default_walker();
    let om = &w.gait.outmap;
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let rate = rng.random_range(0.3..2.0);
        let mut x = on_zero_dynamics(om, om.theta_range.1, rate).unwrap();
        for v in x.dq.iter_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
        let post = p.impact(&x).unwrap().post;
        assert!(p.kinetic_energy(&post) <= p.kinetic_energy(&x) * (1.0 + 1e-12));
    }
}

proptest! {
    #[test]
    fn inertia_stays_positive_definite(q in prop::collection::vec(-1.5f64..1.5, 3)) {
        let d = params().inertia(&q);
        let ev = clfqp_testkit::sym_eigenvalues(&d);
        prop_assert!(ev[0] > 0.0);
        prop_assert!(d.is_symmetric(1e-12));
    }

    #[test]
    fn mechanical_power_balances_energy_rate(q in prop::collection::vec(-1.0f64..1.0, 3), dq in prop::collection::vec(-2.0f64..2.0, 3), u in prop::collection::vec(-20.0f64..20.0, 2)) {
        // d/dt (KE + PE) = q̇ᵀBu along the continuous dynamics
        let w = default_walker();
        let x = MechState { q, dq };
        let acc = clfqp_core::mechsys::accel(&w.model.plant, &x, &u).unwrap();
        let h = 1e-6;
        let shift = |s: f64| MechState {
            q: x.q.iter().zip(&x.dq).map(|(a, b)| a + s * b).collect(),
            dq: x.dq.iter().zip(&acc).map(|(a, b)| a + s * b).collect(),
        };
        let de = (w.model.plant.energy(&shift(h)) - w.model.plant.energy(&shift(-h))) / (2.0 * h);
        let bu = params().input_matrix().mul_vec(&u);
        let power = linalg::dot(&x.dq, &bu);
        prop_assert!((de - power).abs() <= 1e-5 * (1.0 + power.abs()), "{} vs {}", de, power);
    }
}
