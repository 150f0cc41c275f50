//! Fixed-rate hybrid simulation: zero-order-hold control ticks, RK4 substeps,
//! guard bisection and impact resets, with per-tick diagnostics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clfqp::{ControlTickResult, Controller, ControllerConfig, TickStatus};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::mechsys::{accel, MechState};
use crate::models::{GaitDesign, HybridModel};

/// Bisection stops once the guard is this close to zero.
pub const GUARD_TOL: f64 = 1e-10;
/// ... or once the bracketing interval is this short.
pub const TIME_TOL: f64 = 1e-12;
/// Approach rates slower than this are treated as grazing contacts.
pub const GRAZING_RATE: f64 = 1e-6;
/// A tick counts as saturated when some input is this close to a bound.
pub const SATURATION_TOL: f64 = 1e-6;

/// Microsecond time source for solve-time measurement.
pub trait Clock {
    fn now_us(&self) -> f64;
}

/// Reports zero elapsed time; used where no timer exists.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_us(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Control ticks per second.
    pub control_rate: f64,
    /// RK4 substeps per tick.
    pub substeps: usize,
    /// Steps to attempt; for plants without impacts a step lasts one nominal period.
    pub n_steps: usize,
    /// Fall when the torso pitch leaves `±torso_limit` (rad).
    pub torso_limit: f64,
    /// Timeout after this many nominal periods without an impact.
    pub timeout_factor: f64,
    pub seed: u64,
    /// Half-width of the uniform perturbation added to the initial velocities.
    pub perturbation: f64,
    /// Diagnostic mode: the controller is evaluated for logging but zero torque is applied.
    pub zero_torque: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            control_rate: 1000.0,
            substeps: 10,
            n_steps: 15,
            torso_limit: 0.5,
            timeout_factor: 5.0,
            seed: 0,
            perturbation: 0.0,
            zero_torque: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.control_rate > 0.0 && self.control_rate.is_finite()) {
            return bad("control_rate must be > 0");
        }
        if self.substeps == 0 {
            return bad("substeps must be >= 1");
        }
        if self.n_steps == 0 {
            return bad("n_steps must be >= 1");
        }
        if !(self.torso_limit > 0.0) {
            return bad("torso_limit must be > 0");
        }
        if !(self.timeout_factor > 1.0) {
            return bad("timeout_factor must be > 1");
        }
        if !(self.perturbation >= 0.0 && self.perturbation.is_finite()) {
            return bad("perturbation must be >= 0");
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub step: usize,
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub u: Vec<f64>,
    pub mu: Vec<f64>,
    pub v: f64,
    /// Backward difference of `V`; NaN on the first tick of a step.
    pub vdot_fd: f64,
    pub vdot_pred: f64,
    pub d1: f64,
    pub d2: Vec<f64>,
    pub d3: Vec<f64>,
    pub status: TickStatus,
    pub solve_us: f64,
    pub clamped: bool,
    pub polish: f64,
    pub eta_norm: f64,
    pub theta: f64,
    pub umin: Option<Vec<f64>>,
    pub umax: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepOutcome {
    Completed,
    Fall(String),
    Timeout(String),
}

impl StepOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            StepOutcome::Completed => "completed",
            StepOutcome::Fall(_) => "fall",
            StepOutcome::Timeout(_) => "timeout",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub index: usize,
    pub t_start: f64,
    pub duration: f64,
    /// State right after the reset (or at the step boundary without impacts).
    pub post_state: MechState,
    /// Distance of `post_state` from the gait's fixed point.
    pub poincare_residual: f64,
    pub outcome: StepOutcome,
    pub mean_eta: f64,
    pub max_eta: f64,
    pub max_v: f64,
    pub v_end: f64,
}

/// The run-level outcome; a fall or timeout ends the run but keeps the log.
pub type SimOutcome = StepOutcome;

#[derive(Clone, Debug, PartialEq)]
pub struct SimLog {
    pub n: usize,
    pub m: usize,
    pub ticks: Vec<TickRecord>,
    pub steps: Vec<StepRecord>,
    pub outcome: SimOutcome,
    pub final_state: MechState,
    pub initial_state: MechState,
}

impl SimLog {
    pub fn steps_completed(&self) -> usize {
        self.steps.iter().filter(|s| s.outcome == StepOutcome::Completed).count()
    }
}

fn axpy(x: &MechState, k: &MechState, h: f64) -> MechState {
    MechState {
        q: x.q.iter().zip(&k.q).map(|(a, b)| a + h * b).collect(),
        dq: x.dq.iter().zip(&k.dq).map(|(a, b)| a + h * b).collect(),
    }
}

/// One classical RK4 step of length `h` for `ẋ = f(x)`.
pub fn rk4_with(x: &MechState, h: f64, mut f: impl FnMut(&MechState) -> Result<MechState>) -> Result<MechState> {
    let k1 = f(x)?;
    let k2 = f(&axpy(x, &k1, 0.5 * h))?;
    let k3 = f(&axpy(x, &k2, 0.5 * h))?;
    let k4 = f(&axpy(x, &k3, h))?;
    let mut out = x.clone();
    for i in 0..x.dim() {
        out.q[i] += h / 6.0 * (k1.q[i] + 2.0 * k2.q[i] + 2.0 * k3.q[i] + k4.q[i]);
        out.dq[i] += h / 6.0 * (k1.dq[i] + 2.0 * k2.dq[i] + 2.0 * k3.dq[i] + k4.dq[i]);
    }
    if !out.is_finite() {
        return Err(Error::NonFiniteDynamics);
    }
    Ok(out)
}

/// One RK4 step with `u` held.
pub fn rk4_step(hm: &HybridModel, x: &MechState, u: &[f64], h: f64) -> Result<MechState> {
    rk4_with(x, h, |xs| Ok(MechState { q: xs.dq.clone(), dq: accel(&hm.plant, xs, u)? }))
}

/// Locates the guard crossing in `[0, dt]`. `guard_at(τ)` returns the guard
/// value and its rate at time `τ`; the guard must be positive at 0 and
/// non-positive at `dt`.
pub fn detect_impact(mut guard_at: impl FnMut(f64) -> Result<(f64, f64)>, dt: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, dt);
    let (g_hi, mut rate) = guard_at(hi)?;
    let mut root = hi;
    if g_hi.abs() >= GUARD_TOL {
        loop {
            let mid = 0.5 * (lo + hi);
            let (g, r) = guard_at(mid)?;
            root = mid;
            rate = r;
            if g.abs() < GUARD_TOL || hi - lo < TIME_TOL {
                break;
            }
            if g > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    if rate.abs() < GRAZING_RATE {
        return Err(Error::GrazingImpact { rate });
    }
    Ok(root)
}

struct StepAcc {
    index: usize,
    t_start: f64,
    first_tick: usize,
}

fn close_step(
    log: &SimLog,
    acc: &StepAcc,
    t_end: f64,
    post: MechState,
    gait: &GaitDesign,
    outcome: StepOutcome,
) -> StepRecord {
    let ticks = &log.ticks[acc.first_tick..];
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut max_eta = 0.0f64;
    let mut max_v = 0.0f64;
    for tk in ticks {
        if tk.eta_norm.is_finite() {
            sum += tk.eta_norm;
            count += 1;
            max_eta = max_eta.max(tk.eta_norm);
        }
        if tk.v.is_finite() {
            max_v = max_v.max(tk.v);
        }
    }
    let residual = if post.dim() == gait.fixed_point.dim() { post.distance(&gait.fixed_point) } else { f64::NAN };
    StepRecord {
        index: acc.index,
        t_start: acc.t_start,
        duration: t_end - acc.t_start,
        post_state: post,
        poincare_residual: residual,
        outcome,
        mean_eta: if count > 0 { sum / count as f64 } else { f64::NAN },
        max_eta,
        max_v,
        v_end: ticks.last().map_or(f64::NAN, |t| t.v),
    }
}

fn nan_tick(m: usize) -> ControlTickResult {
    ControlTickResult {
        u: vec![0.0; m],
        mu: vec![f64::NAN; m],
        d1: f64::NAN,
        d2: vec![f64::NAN; m],
        d3: vec![f64::NAN; m],
        status: TickStatus::ClosedForm,
        v: f64::NAN,
        vdot_pred: f64::NAN,
        clamped: false,
        polish: 0.0,
        eta: Vec::new(),
        theta: f64::NAN,
        ustar: vec![f64::NAN; m],
        bounds: None,
        qp_iterations: 0,
    }
}

/// Perturbs the initial velocities by a seeded uniform draw.
pub fn perturb_initial_state(x0: &MechState, magnitude: f64, seed: u64) -> MechState {
    let mut x = x0.clone();
    if magnitude > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in x.dq.iter_mut() {
            *v += rng.random_range(-magnitude..=magnitude);
        }
    }
    x
}

/// Runs the closed loop for `sim.n_steps` steps or until a fall or timeout.
/// Configuration problems are returned as errors; runtime failures end the
/// run and are recorded in [`SimLog::outcome`].
pub fn simulate_walk(
    hm: &HybridModel,
    gait: &GaitDesign,
    ctrl: &ControllerConfig,
    sim: &SimConfig,
    x0: &MechState,
    clock: &dyn Clock,
) -> Result<SimLog> {
    sim.validate()?;
    let n = hm.plant.n();
    let m = hm.plant.m();
    check_dim("initial state", n, x0.dim())?;
    check_dim("output map", n, gait.outmap.n())?;
    ctrl.validate(m)?;
    if !(gait.step_period > 0.0) {
        return Err(Error::InvalidConfig("gait step_period must be > 0".into()));
    }

    let mut controller = Controller::new(ctrl.clone());
    let dt = sim.dt();
    let h = dt / sim.substeps as f64;
    let timeout = sim.timeout_factor * gait.step_period;
    let x_init = perturb_initial_state(x0, sim.perturbation, sim.seed);

    let mut log = SimLog {
        n,
        m,
        ticks: Vec::new(),
        steps: Vec::new(),
        outcome: StepOutcome::Completed,
        final_state: x_init.clone(),
        initial_state: x_init.clone(),
    };
    let mut x = x_init;
    let mut acc = StepAcc { index: 0, t_start: 0.0, first_tick: 0 };
    let mut tick_in_step = 0usize;
    let mut prev_v: Option<(f64, f64)> = None;

    let end_run = |log: &mut SimLog, acc: &StepAcc, t: f64, x: &MechState, outcome: StepOutcome| {
        let rec = close_step(log, acc, t, x.clone(), gait, outcome.clone());
        log.steps.push(rec);
        log.outcome = outcome;
        log.final_state = x.clone();
    };

    'run: while acc.index < sim.n_steps {
        let t = acc.t_start + tick_in_step as f64 * dt;

        if !hm.has_impacts() && t - acc.t_start >= gait.step_period - 0.5 * dt {
            let rec = close_step(&log, &acc, t, x.clone(), gait, StepOutcome::Completed);
            log.steps.push(rec);
            acc = StepAcc { index: acc.index + 1, t_start: t, first_tick: log.ticks.len() };
            tick_in_step = 0;
            prev_v = None;
            continue;
        }
        if t - acc.t_start > timeout {
            let why = format!("no impact within {:.3} s", t - acc.t_start);
            end_run(&mut log, &acc, t, &x, StepOutcome::Timeout(why));
            break;
        }
        if let Some(pitch) = hm.torso_pitch(&x) {
            if pitch.abs() > sim.torso_limit {
                let why = format!("torso pitch {pitch:.4} rad beyond {}", sim.torso_limit);
                end_run(&mut log, &acc, t, &x, StepOutcome::Fall(why));
                break;
            }
        }

        let t0 = clock.now_us();
        let res = controller.compute(&hm.plant, &gait.outmap, &x);
        let solve_us = clock.now_us() - t0;
        let res = match res {
            Ok(r) => r,
            Err(e) if sim.zero_torque => {
                let _ = e;
                nan_tick(m)
            }
            Err(e) => {
                end_run(&mut log, &acc, t, &x, StepOutcome::Fall(format!("{e}")));
                break;
            }
        };
        let vdot_fd = match prev_v {
            Some((tp, vp)) if t > tp => (res.v - vp) / (t - tp),
            _ => f64::NAN,
        };
        prev_v = Some((t, res.v));
        let u = if sim.zero_torque { vec![0.0; m] } else { res.u.clone() };
        log.ticks.push(TickRecord {
            t,
            step: acc.index,
            q: x.q.clone(),
            dq: x.dq.clone(),
            u: u.clone(),
            mu: res.mu,
            v: res.v,
            vdot_fd,
            vdot_pred: res.vdot_pred,
            d1: res.d1,
            d2: res.d2,
            d3: res.d3,
            status: res.status,
            solve_us,
            clamped: res.clamped,
            polish: res.polish,
            eta_norm: if res.eta.is_empty() { f64::NAN } else { linalg::norm2(&res.eta) },
            theta: res.theta,
            umin: res.bounds.as_ref().map(|b| b.umin.clone()),
            umax: res.bounds.map(|b| b.umax),
        });

        for k in 0..sim.substeps {
            let xn = match rk4_step(hm, &x, &u, h) {
                Ok(v) => v,
                Err(e) => {
                    end_run(&mut log, &acc, t + k as f64 * h, &x, StepOutcome::Fall(format!("{e}")));
                    break 'run;
                }
            };
            if let (Some(g0), Some(g1)) = (hm.guard(&x), hm.guard(&xn)) {
                if g1.armed && g0.height > 0.0 && g1.height <= 0.0 {
                    let xs = x.clone();
                    let found = detect_impact(
                        |tau| {
                            let xt = rk4_step(hm, &xs, &u, tau)?;
                            let g = hm.guard(&xt).ok_or(Error::NonFiniteDynamics)?;
                            Ok((g.height, g.rate))
                        },
                        h,
                    );
                    let t_sub = t + k as f64 * h;
                    let tau = match found {
                        Ok(tau) => tau,
                        Err(e) => {
                            end_run(&mut log, &acc, t_sub, &x, StepOutcome::Timeout(format!("{e}")));
                            break 'run;
                        }
                    };
                    let t_imp = t_sub + tau;
                    let post = rk4_step(hm, &xs, &u, tau).and_then(|xi| hm.reset(&xi));
                    let post = match post {
                        Ok(p) => p,
                        Err(e) => {
                            end_run(&mut log, &acc, t_sub, &x, StepOutcome::Fall(format!("{e}")));
                            break 'run;
                        }
                    };
                    let rec = close_step(&log, &acc, t_imp, post.clone(), gait, StepOutcome::Completed);
                    log.steps.push(rec);
                    x = post;
                    acc = StepAcc { index: acc.index + 1, t_start: t_imp, first_tick: log.ticks.len() };
                    tick_in_step = 0;
                    prev_v = None;
                    continue 'run;
                }
            }
            x = xn;
        }
        tick_in_step += 1;
    }
    log.final_state = x;
    Ok(log)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepSummary {
    pub index: usize,
    pub duration: f64,
    pub mean_eta: f64,
    pub max_eta: f64,
    pub max_v: f64,
    pub poincare_residual: f64,
    pub outcome: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryStats {
    pub outcome: String,
    pub outcome_detail: String,
    pub ticks: usize,
    pub steps_attempted: usize,
    pub steps_completed: usize,
    pub mean_eta: f64,
    pub max_eta: f64,
    /// Mean over steps of the per-step mean `‖η‖`.
    pub mean_step_eta: f64,
    pub max_v: f64,
    pub frac_closed_form: f64,
    pub frac_optimal: f64,
    pub frac_max_iterations: f64,
    pub frac_infeasible: f64,
    pub frac_clamped: f64,
    pub frac_saturated: f64,
    pub max_abs_d1: f64,
    pub max_d2: f64,
    pub max_d3: f64,
    /// Largest bound violation among Optimal ticks.
    pub max_bound_violation_optimal: f64,
    /// Largest projection applied to an Optimal hard-QP torque.
    pub max_polish: f64,
    pub median_solve_us: f64,
    pub p99_solve_us: f64,
    pub final_poincare_residual: f64,
    pub per_step: Vec<StepSummary>,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = libm::ceil(p * sorted.len() as f64) as usize;
    sorted[idx.clamp(1, sorted.len()) - 1]
}

/// Nearest-rank percentile, `p` in `[0, 1]`.
pub fn percentile_of(values: &[f64], p: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    percentile(&v, p)
}

pub fn bound_violation(tick: &TickRecord) -> f64 {
    let (Some(lo), Some(hi)) = (&tick.umin, &tick.umax) else {
        return 0.0;
    };
    let mut worst = 0.0f64;
    for i in 0..tick.u.len() {
        worst = worst.max(lo[i] - tick.u[i]).max(tick.u[i] - hi[i]);
    }
    worst
}

pub fn is_saturated(tick: &TickRecord) -> bool {
    let (Some(lo), Some(hi)) = (&tick.umin, &tick.umax) else {
        return false;
    };
    (0..tick.u.len()).any(|i| (tick.u[i] - lo[i]).abs() < SATURATION_TOL || (tick.u[i] - hi[i]).abs() < SATURATION_TOL)
}

pub fn summarize(log: &SimLog) -> SummaryStats {
    let nt = log.ticks.len();
    let frac = |pred: &dyn Fn(&TickRecord) -> bool| {
        if nt == 0 {
            0.0
        } else {
            log.ticks.iter().filter(|t| pred(t)).count() as f64 / nt as f64
        }
    };
    let mut sum_eta = 0.0;
    let mut n_eta = 0usize;
    let mut max_eta = 0.0f64;
    let mut max_v = 0.0f64;
    let mut max_d1 = 0.0f64;
    let mut max_d2 = 0.0f64;
    let mut max_d3 = 0.0f64;
    let mut viol = 0.0f64;
    let mut polish = 0.0f64;
    for t in &log.ticks {
        polish = polish.max(t.polish);
        if t.eta_norm.is_finite() {
            sum_eta += t.eta_norm;
            n_eta += 1;
            max_eta = max_eta.max(t.eta_norm);
        }
        if t.v.is_finite() {
            max_v = max_v.max(t.v);
        }
        if t.d1.is_finite() {
            max_d1 = max_d1.max(t.d1.abs());
        }
        max_d2 = max_d2.max(linalg::norm_inf(&t.d2));
        max_d3 = max_d3.max(linalg::norm_inf(&t.d3));
        if t.status == TickStatus::Optimal {
            viol = viol.max(bound_violation(t));
        }
    }
    let solve: Vec<f64> = log.ticks.iter().map(|t| t.solve_us).collect();
    let per_step: Vec<StepSummary> = log
        .steps
        .iter()
        .map(|s| StepSummary {
            index: s.index,
            duration: s.duration,
            mean_eta: s.mean_eta,
            max_eta: s.max_eta,
            max_v: s.max_v,
            poincare_residual: s.poincare_residual,
            outcome: s.outcome.label().into(),
        })
        .collect();
    let step_means: Vec<f64> = log.steps.iter().map(|s| s.mean_eta).filter(|v| v.is_finite()).collect();
    let detail = match &log.outcome {
        StepOutcome::Completed => String::new(),
        StepOutcome::Fall(w) | StepOutcome::Timeout(w) => w.clone(),
    };
    SummaryStats {
        outcome: log.outcome.label().into(),
        outcome_detail: detail,
        ticks: nt,
        steps_attempted: log.steps.len(),
        steps_completed: log.steps_completed(),
        mean_eta: if n_eta > 0 { sum_eta / n_eta as f64 } else { f64::NAN },
        max_eta,
        mean_step_eta: if step_means.is_empty() {
            f64::NAN
        } else {
            step_means.iter().sum::<f64>() / step_means.len() as f64
        },
        max_v,
        frac_closed_form: frac(&|t| t.status == TickStatus::ClosedForm),
        frac_optimal: frac(&|t| t.status == TickStatus::Optimal),
        frac_max_iterations: frac(&|t| t.status == TickStatus::MaxIterations),
        frac_infeasible: frac(&|t| t.status == TickStatus::Infeasible),
        frac_clamped: frac(&|t| t.clamped),
        frac_saturated: frac(&is_saturated),
        max_abs_d1: max_d1,
        max_d2,
        max_d3,
        max_bound_violation_optimal: viol,
        max_polish: polish,
        median_solve_us: percentile_of(&solve, 0.5),
        p99_solve_us: percentile_of(&solve, 0.99),
        final_poincare_residual: log
            .steps
            .iter()
            .rev()
            .find(|s| s.outcome == StepOutcome::Completed)
            .map_or(f64::NAN, |s| s.poincare_residual),
        per_step,
    }
}

/// `(t, q[coord], q̇[coord])` samples for a phase portrait.
pub fn phase_portrait(log: &SimLog, coord: usize) -> Vec<(f64, f64, f64)> {
    log.ticks.iter().filter(|t| coord < t.q.len()).map(|t| (t.t, t.q[coord], t.dq[coord])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_guard_midpoint() {
        let tau = detect_impact(|t| Ok((0.5e-3 - t, -1.0)), 1e-3).unwrap();
        assert!((tau - 0.5e-3).abs() < 1e-10);
    }

    #[test]
    fn grazing_contact_is_rejected() {
        let r = detect_impact(|t| Ok((0.5e-3 - t, -1e-9)), 1e-3);
        assert!(matches!(r, Err(Error::GrazingImpact { .. })));
    }

    #[test]
    fn percentiles() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(percentile_of(&v, 0.5), 3.0);
        assert_eq!(percentile_of(&v, 0.99), 5.0);
        assert!(percentile_of(&[], 0.5).is_nan());
    }

    #[test]
    fn sim_config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let bad = SimConfig { substeps: 0, ..SimConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SimConfig { control_rate: 0.0, ..SimConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn perturbation_is_seeded() {
        let x = MechState::zeros(3);
        let a = perturb_initial_state(&x, 0.1, 4);
        let b = perturb_initial_state(&x, 0.1, 4);
        let c = perturb_initial_state(&x, 0.1, 5);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.dq.iter().all(|v| v.abs() <= 0.1));
        assert_eq!(perturb_initial_state(&x, 0.0, 4), x);
    }
}
