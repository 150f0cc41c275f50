//! Acceptance checks, one line per criterion. Criterion 9 is a timing target
//! on shared hardware and is reported without failing the run.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clfqp::bench::{self, BenchSize};
use clfqp::formats::GaitFile;
use clfqp::output::{read_log, SummaryDoc, TIMING_COLUMNS};
use clfqp::runner::{self, Resolved};
use clfqp_core::bezier::Bezier;
use clfqp_core::clfqp::{fit_bezier_ustar, Controller, ControllerConfig, ControllerMode, SaturationSpec, TickStatus};
use clfqp_core::linalg::{self, Matrix};
use clfqp_core::mechsys::{transverse_state, MechState};
use clfqp_core::models::gait::GaitDesign;
use clfqp_core::models::{make_linear_chain, HybridModel};
use clfqp_core::qp::{solve_qp, QpStatus};
use clfqp_core::resclf::{build_resclf, convergence_envelope, lyapunov_residual};
use clfqp_core::sim::{simulate_walk, NoClock, SimConfig, SimLog};
use clfqp_testkit::{active_set_oracle, max_real_eigenvalue, random_feasible_qp, sym_eigenvalues};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

struct Cases {
    dir: tempfile::TempDir,
    runs: Vec<(Resolved, SimLog, SummaryDoc)>,
}

impl Cases {
    fn load() -> Self {
        let dir = tempfile::tempdir().unwrap();
        for f in ["caseA.json", "caseB.json", "caseC.json", "caseD.json", "gait.json"] {
            fs::copy(scenarios().join(f), dir.path().join(f)).unwrap();
        }
        let runs = ["caseA", "caseB", "caseC", "caseD"]
            .iter()
            .map(|c| {
                let r = runner::load(&dir.path().join(format!("{c}.json"))).unwrap();
                let (log, s) = runner::simulate(&r).unwrap();
                (r, log, s)
            })
            .collect();
        Cases { dir, runs }
    }

    fn case(&self, c: char) -> &(Resolved, SimLog, SummaryDoc) {
        &self.runs[(c as u8 - b'A') as usize]
    }
}

fn lyapunov() -> Check {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let m = rng.random_range(1..=4);
        let kp: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..20.0)).collect();
        let kd: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..20.0)).collect();
        let a = Matrix::from_fn(2 * m, 2 * m, |_, _| rng.random_range(-1.0..1.0));
        let mut q = a.matmul(&a.transpose()).add(&Matrix::identity(2 * m).scale(0.1));
        q.symmetrize();
        let eps = rng.random_range(0.01..0.99);
        let clf = build_resclf(&kp, &kd, &q, eps).map_err(|e| format!("draw {k}: {e}"))?;
        let res = lyapunov_residual(&clf.a, &clf.p, &q) / q.norm_inf();
        worst = worst.max(res);
        let ev = sym_eigenvalues(&clf.p);
        let top = ev[ev.len() - 1];
        let ok = res < 1e-10
            && max_real_eigenvalue(&clf.a) < 0.0
            && ev[0] > 0.0
            && sym_eigenvalues(&clf.peps)[0] > 0.0
            && (clf.c1 - ev[0]).abs() <= 1e-9 * top
            && (clf.c2 - top).abs() <= 1e-9 * top
            && (clf.c3 - sym_eigenvalues(&q)[0] / clf.c2).abs() <= 1e-9 * clf.c3;
        if !ok {
            return Err(format!("draw {k} fails (residual {res:.1e})"));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(secs < 1.0, format!("100 draws, worst relative residual {worst:.1e}, {secs:.2} s"))
}

fn qp_oracle() -> Check {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut gap, mut viol) = (0.0f64, 0.0f64);
    for k in 0..1000 {
        let nv = rng.random_range(1..=6);
        let nc = rng.random_range(1..=12);
        let p = random_feasible_qp(&mut rng, nv, nc);
        let oracle = active_set_oracle(&p, 1e-9).ok_or(format!("case {k}: oracle found no solution"))?;
        let s = solve_qp(&p, 60, 1e-10);
        if s.status != QpStatus::Optimal {
            return Err(format!("case {k}: {}", s.status.as_str()));
        }
        gap = gap.max((p.objective(&s.x) - oracle.objective).abs() / (1.0 + oracle.objective.abs()));
        viol = viol.max(p.max_violation(&s.x));
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(
        gap < 1e-8 && viol < 1e-8 && secs < 30.0,
        format!("1000 QPs, worst objective gap {gap:.1e}, worst violation {viol:.1e}, {secs:.1} s"),
    )
}

fn gait_states(r: &Resolved, count: usize) -> Vec<MechState> {
    let mn = ControllerConfig::min_norm(r.ctrl.clf.clone());
    let sim = SimConfig { n_steps: 3, perturbation: 0.1, seed: 5, ..SimConfig::default() };
    let log = simulate_walk(&r.model, &r.gait, &mn, &sim, &r.gait.fixed_point, &NoClock).unwrap();
    let stride = (log.ticks.len() / count).max(1);
    log.ticks.iter().step_by(stride).take(count).map(|t| MechState { q: t.q.clone(), dq: t.dq.clone() }).collect()
}

fn min_norm_equivalence(cases: &Cases) -> Check {
    let r = &cases.case('A').0;
    let mn = ControllerConfig::min_norm(r.ctrl.clf.clone());
    let hq = ControllerConfig {
        mode: ControllerMode::HardQp,
        p1: 1e12,
        sat: SaturationSpec::Constant { umin: vec![-1e6; 2], umax: vec![1e6; 2] },
        qp_max_iter: 60,
        qp_tol: 1e-10,
        ..mn.clone()
    };
    let (mut a, mut b) = (Controller::new(mn), Controller::new(hq));
    let states = gait_states(r, 500);
    let (mut du, mut d1) = (0.0f64, f64::NEG_INFINITY);
    for x in &states {
        let ra = a.compute(&r.model.plant, &r.gait.outmap, x).map_err(|e| e.to_string())?;
        let rb = b.compute(&r.model.plant, &r.gait.outmap, x).map_err(|e| e.to_string())?;
        if rb.status != TickStatus::Optimal {
            return Err(format!("hard QP {} at theta {}", rb.status.as_str(), rb.theta));
        }
        du = du.max(ra.u.iter().zip(&rb.u).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
        d1 = d1.max(rb.d1);
    }
    ensure(
        states.len() == 500 && du < 1e-6 && d1 <= 1e-6,
        format!("{} states, max |u - u_mn| {du:.1e}, max d1 {d1:.1e}", states.len()),
    )
}

fn envelope() -> Check {
    let t0 = Instant::now();
    let m = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for eps in [0.1, 0.2, 0.5] {
        let clf = build_resclf(&[1.0, 1.0], &[2.0, 2.0], &Matrix::identity(4), eps).map_err(|e| e.to_string())?;
        let cfg = ControllerConfig::min_norm(clf.clone());
        for _ in 0..20 {
            let mut x0 = MechState::zeros(2 * m);
            for i in 0..m {
                x0.q[i] = rng.random_range(-1.0..1.0);
                x0.dq[i] = rng.random_range(-1.0..1.0);
            }
            let (plant, outmap) = make_linear_chain(m).unwrap();
            let eta0 = linalg::norm2(&transverse_state(&outmap, &x0).unwrap().eta);
            let hm = HybridModel { plant };
            let gait = GaitDesign::without_impacts(outmap, x0.clone(), 0.5);
            let sim = SimConfig { n_steps: 4, ..SimConfig::default() };
            let log = simulate_walk(&hm, &gait, &cfg, &sim, &x0, &NoClock).map_err(|e| e.to_string())?;
            for t in &log.ticks {
                let bound = convergence_envelope(&clf, t.t, eta0) * (1.0 + 1e-6) + 1e-12;
                worst = worst.max(t.eta_norm / bound);
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(worst <= 1.0 && secs < 10.0, format!("60 runs, worst |eta|/bound {worst:.3}, {secs:.2} s"))
}

fn decay_inequalities(cases: &Cases) -> Check {
    let r = &cases.case('A').0;
    let mn = ControllerConfig::min_norm(r.ctrl.clf.clone());
    let sim = SimConfig { perturbation: 0.1, seed: 9, ..r.sim.clone() };
    let log = simulate_walk(&r.model, &r.gait, &mn, &sim, &r.x0, &NoClock).map_err(|e| e.to_string())?;
    let rate = r.ctrl.clf.decay_rate();
    let mut worst_mn = f64::NEG_INFINITY;
    for t in &log.ticks {
        worst_mn = worst_mn.max(t.vdot_pred - (-rate * t.v + 1e-6 * (1.0 + t.v)));
    }
    let mut worst_qp = f64::NEG_INFINITY;
    let mut checked = 0;
    for (r, log, _) in &cases.runs {
        let rate = r.ctrl.clf.decay_rate();
        for t in log.ticks.iter().filter(|t| t.status == TickStatus::Optimal) {
            worst_qp = worst_qp.max(t.vdot_pred - (-rate * t.v + t.d1 + r.ctrl.qp_tol * (1.0 + t.v)));
            checked += 1;
        }
    }
    ensure(
        worst_mn <= 0.0 && worst_qp <= 0.0,
        format!(
            "min-norm {} ticks, worst excess {worst_mn:.1e}; hard QP {checked} optimal ticks, worst excess {worst_qp:.1e}",
            log.ticks.len()
        ),
    )
}

fn bounds_respected(cases: &Cases) -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for c in ['A', 'B', 'D'] {
        let s = &cases.case(c).2;
        let non_opt = s.frac_max_iterations + s.frac_infeasible;
        ok &= s.max_bound_violation_optimal <= 1e-8 && non_opt < 0.01;
        parts.push(format!("{c}: violation {:.1e}, non-optimal {:.2}%", s.max_bound_violation_optimal, 100.0 * non_opt));
    }
    ensure(ok, parts.join("; "))
}

fn ordering(cases: &Cases) -> Check {
    let e: Vec<f64> = ['A', 'B', 'C'].iter().map(|&c| cases.case(c).2.mean_step_eta).collect();
    let c = &cases.case('C').2;
    let tail: Vec<f64> = c.per_step.iter().rev().take(3).rev().map(|s| s.max_v).collect();
    let rising = tail.len() == 3 && tail.windows(2).all(|w| w[1] > w[0]);
    // A and B differ only at round-off when B's bounds never bind
    let monotone = e[0] <= e[1] * (1.0 + 1e-6) && e[1] <= e[2] * (1.0 + 1e-6);
    ensure(
        monotone && c.outcome == "fall" && rising,
        format!(
            "mean step |eta| A {:.4e}, B {:.4e}, C {:.4e}; C {} at step {}, last-step V maxima {:?}",
            e[0], e[1], e[2], c.outcome, c.steps_attempted, tail.iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>()
        ),
    )
}

fn case_a_converges(cases: &Cases) -> Check {
    let s = &cases.case('A').2;
    ensure(
        s.steps_completed >= 15 && s.final_poincare_residual < 1e-2,
        format!("{} steps, final Poincare residual {:.2e}", s.steps_completed, s.final_poincare_residual),
    )
}

fn qp_timing() -> Check {
    let r = bench::bench(BenchSize::Hard(2), 5000, 0);
    let msg = format!(
        "{}x{} hard QP: median {:.1} us, p99 {:.1} us over {} solves",
        r.nv, r.nc, r.median_us, r.p99_us, r.samples
    );
    ensure(r.median_us < 1000.0 && r.p99_us < 2000.0 && r.optimal == r.samples, msg)
}

fn regression() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let truth = Bezier::new((0..2).map(|_| std::array::from_fn(|_| rng.random_range(-50.0..50.0))).collect());
    let range = (-0.2, 0.2);
    let thetas: Vec<f64> = (0..200).map(|k| range.0 + (range.1 - range.0) * k as f64 / 199.0).collect();
    let rows: Vec<Vec<f64>> = (0..2)
        .map(|i| thetas.iter().map(|t| truth.eval((t - range.0) / (range.1 - range.0))[i]).collect())
        .collect();
    let fit = fit_bezier_ustar(&thetas, &rows, range).map_err(|e| e.to_string())?;
    let refit = fit
        .points()
        .iter()
        .flatten()
        .zip(truth.points().iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let gf = GaitFile::read(&scenarios().join("gait.json")).map_err(|e| e.to_string())?;
    let d = &gf.diagnostics;
    ensure(
        refit < 1e-10 && gf.ustar_fit.is_some() && d.ustar_fit_residual < 0.05 * d.ustar_span,
        format!(
            "refit error {refit:.1e}; u* fit residual {:.3} of span {:.1} ({:.2}%)",
            d.ustar_fit_residual,
            d.ustar_span,
            100.0 * d.ustar_fit_residual / d.ustar_span
        ),
    )
}

fn determinism(cases: &Cases) -> Check {
    let p = cases.dir.path().join("caseD.json");
    let mut tables = Vec::new();
    for _ in 0..2 {
        let r = runner::run(&p).map_err(|e| e.to_string())?;
        let t = read_log(&r.output_dir.join("log.csv")).map_err(|e| e.to_string())?;
        tables.push(t.without(&TIMING_COLUMNS));
    }
    let same = tables[0] == tables[1];
    ensure(same, format!("two caseD runs, {} rows, identical without timing: {same}", tables[0].rows.len()))
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let cases = Cases::load();
    let checks: Vec<(u32, &str, bool, Check)> = vec![
        (1, "lyapunov construction", true, lyapunov()),
        (2, "qp matches oracle", true, qp_oracle()),
        (3, "min-norm equivalence", true, min_norm_equivalence(&cases)),
        (4, "linear-chain envelope", true, envelope()),
        (5, "clf decay inequalities", true, decay_inequalities(&cases)),
        (6, "bounds respected in A/B/D", true, bounds_respected(&cases)),
        (7, "saturation ordering", true, ordering(&cases)),
        (8, "case A convergence", true, case_a_converges(&cases)),
        (9, "qp timing", false, qp_timing()),
        (10, "bezier regression", true, regression()),
        (11, "deterministic log", true, determinism(&cases)),
    ];
    let mut failed = 0;
    for (n, name, hard, res) in &checks {
        let (tag, msg) = match res {
            Ok(m) => ("PASS", m),
            Err(m) if *hard => {
                failed += 1;
                ("FAIL", m)
            }
            Err(m) => ("FAIL (soft)", m),
        };
        println!("criterion {n:>2} {tag:<11} {name}: {msg}");
    }
    println!("{} of {} criteria passed in {:.1} s", checks.iter().filter(|c| c.3.is_ok()).count(), checks.len(), t0.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
