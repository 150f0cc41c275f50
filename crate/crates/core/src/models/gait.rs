//! Periodic gait design for the biped: impact-invariant virtual constraints,
//! a one-step Poincaré map under continuous-time control, and a damped
//! Newton shooting search for its fixed point.

use alloc::vec;
use alloc::vec::Vec;

use crate::bezier::{Bezier, DEGREE};
use crate::clfqp::{fit_bezier_ustar, fit_residual, Controller, ControllerConfig};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::mechsys::{accel, MechState, OutputMap};
use crate::resclf::{build_resclf, Resclf};
use crate::sim::{detect_impact, rk4_with};

use super::{biped_output_basis, BipedParams, HybridModel, PlantModel};

/// Integration step of the shooting map.
pub const SHOOTING_STEP: f64 = 5e-4;
/// Torso pitch beyond which a step counts as a fall.
pub const TORSO_LIMIT: f64 = 0.5;
/// Timeout in units of the nominal period.
pub const TIMEOUT_FACTOR: f64 = 5.0;
pub const NEWTON_TOL: f64 = 1e-6;
pub const NEWTON_MAX_ITER: usize = 50;
pub const FD_STEP: f64 = 1e-6;

/// Free shape parameters of the desired outputs. The first two control points
/// of each row are fixed by impact invariance and the last ones by the
/// pre-impact posture, so only the interior points are chosen here.
#[derive(Clone, Debug, PartialEq)]
pub struct GaitTemplate {
    /// Stance-leg angle at touchdown; the phase runs over `[−α, α]`.
    pub half_step_angle: f64,
    /// Torso pitch at touchdown.
    pub torso_angle: f64,
    /// Interior control points 2..=4 of the torso-pitch row.
    pub torso_points: [f64; 3],
    /// Interior control points 2..=4 of the leg-sum row.
    pub swing_points: [f64; 3],
    /// Lower end of the post-impact phase-rate scan for the seed search.
    pub min_rate: f64,
    /// Upper end of the same scan.
    pub max_rate: f64,
}

impl Default for GaitTemplate {
    fn default() -> Self {
        Self {
            half_step_angle: 0.2,
            torso_angle: 0.2,
            torso_points: [0.2, 0.2, 0.2],
            swing_points: [0.15, 0.0, -0.1],
            min_rate: 0.4,
            max_rate: 3.0,
        }
    }
}

impl GaitTemplate {
    pub fn validate(&self) -> Result<()> {
        let a = self.half_step_angle;
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParams(alloc::format!("half_step_angle must lie in (0, 1), got {a}")));
        }
        if !(self.torso_angle.abs() < TORSO_LIMIT) {
            return Err(Error::InvalidParams("torso_angle must be within the fall limit".into()));
        }
        if !(0.0 < self.min_rate && self.min_rate < self.max_rate) {
            return Err(Error::InvalidParams("need 0 < min_rate < max_rate".into()));
        }
        let all = self.torso_points.iter().chain(&self.swing_points);
        if !all.clone().all(|v| v.is_finite()) {
            return Err(Error::InvalidParams("template control points must be finite".into()));
        }
        Ok(())
    }
}

/// Output gains and ε used for gait design and the biped presets.
pub const DEFAULT_KP: [f64; 2] = [1.0, 1.0];
pub const DEFAULT_KD: [f64; 2] = [2.0, 2.0];
/// With ε = 0.1 the designed orbit is unstable under min-norm control; the
/// Poincaré spectral radius drops below one near ε = 0.06.
pub const DEFAULT_EPSILON: f64 = 0.05;

/// The RES-CLF built from the default gains with `Q = I`.
pub fn default_clf() -> Result<Resclf> {
    build_resclf(&DEFAULT_KP, &DEFAULT_KD, &Matrix::identity(4), DEFAULT_EPSILON)
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct GaitDiagnostics {
    pub fixed_point_residual: f64,
    pub newton_iterations: usize,
    /// Largest `‖η‖∞` sampled along the orbit.
    pub max_eta_on_orbit: f64,
    pub ustar_fit_residual: f64,
    /// Largest per-channel range of `u*` over the orbit.
    pub ustar_span: f64,
    /// Spectral radius of the finite-difference Poincaré Jacobian.
    pub spectral_radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaitDesign {
    pub outmap: OutputMap,
    /// Post-impact state on the Poincaré section.
    pub fixed_point: MechState,
    pub step_period: f64,
    pub ustar_fit: Option<Bezier>,
    pub diagnostics: GaitDiagnostics,
}

impl GaitDesign {
    /// A "gait" for plants without impacts: the step period only sets the
    /// logging segment length.
    pub fn without_impacts(outmap: OutputMap, x0: MechState, period: f64) -> Self {
        Self { outmap, fixed_point: x0, step_period: period, ustar_fit: None, diagnostics: GaitDiagnostics::default() }
    }
}

fn biped_params(hm: &HybridModel) -> Result<&BipedParams> {
    match &hm.plant {
        PlantModel::ThreeLinkBiped(p) => Ok(p),
        _ => Err(Error::InvalidParams("gait design needs the three-link biped".into())),
    }
}

/// `[H₀; cᵀ]`, which maps `q` to `(H₀q, θ)`.
fn coordinate_matrix(outmap: &OutputMap) -> Matrix {
    let n = outmap.n();
    let m = outmap.m();
    Matrix::from_fn(m + 1, n, |i, j| if i < m { outmap.h0[(i, j)] } else { outmap.theta_coeffs[j] })
}

/// The state on the zero-dynamics surface at phase `θ` with rate `θ̇`.
pub fn on_zero_dynamics(outmap: &OutputMap, theta: f64, thetadot: f64) -> Result<MechState> {
    let mcoord = coordinate_matrix(outmap);
    if !mcoord.is_square() {
        return Err(Error::InvalidParams("zero-dynamics lift needs n = m + 1".into()));
    }
    let s = outmap.phase(theta);
    let (yd, yd1, _) = outmap.yd.eval_extended(s);
    let mut rq = yd;
    rq.push(theta);
    let mut rv: Vec<f64> = yd1.iter().map(|v| v / outmap.span()).collect();
    rv.push(1.0);
    let lu = linalg::Lu::new(&mcoord).ok_or(Error::InvalidParams("output basis is singular".into()))?;
    let q = lu.solve(&rq);
    let dq = lu.solve(&rv).into_iter().map(|v| v * thetadot).collect();
    Ok(MechState { q, dq })
}

/// Builds the desired-output curve so that the zero-dynamics surface is
/// invariant under the impact map: the post-impact posture and velocity
/// direction fix the first two control points of each row.
pub fn design_outmap(params: &BipedParams, template: &GaitTemplate) -> Result<OutputMap> {
    template.validate()?;
    let (h0, c) = biped_output_basis();
    let alpha = template.half_step_angle;
    let tau = template.torso_angle;
    let t = template.torso_points;
    let w = template.swing_points;
    // provisional rows: first two points are overwritten below
    let mut rows = vec![[tau, tau, t[0], t[1], t[2], tau], [0.0, 0.0, w[0], w[1], w[2], 0.0]];
    let provisional = OutputMap::new(h0.clone(), c.clone(), Bezier::new(rows.clone()), (-alpha, alpha))?;

    let pre = on_zero_dynamics(&provisional, alpha, 1.0)?;
    let imp = params.impact(&pre)?;
    let qp = &imp.post.q;
    let dqp = &imp.post.dq;
    let rate = linalg::dot(&c, dqp);
    if !(rate > 0.0) {
        return Err(Error::InvalidParams(alloc::format!("impact reverses the phase rate ({rate:e})")));
    }
    let a0 = h0.mul_vec(qp);
    let v = h0.mul_vec(dqp);
    let span = 2.0 * alpha;
    for i in 0..2 {
        rows[i][0] = a0[i];
        rows[i][1] = a0[i] + span / DEGREE as f64 * v[i] / rate;
    }
    OutputMap::new(h0, c, Bezier::new(rows), (-alpha, alpha))
}

/// Result of one simulated step under continuous-time control.
#[derive(Clone, Debug)]
pub struct StepTrace {
    pub pre_impact: MechState,
    pub post_impact: MechState,
    pub duration: f64,
    /// `(θ, u*, ‖η‖∞)` at every integration node.
    pub samples: Vec<(f64, Vec<f64>, f64)>,
}

fn controlled_field(hm: &HybridModel, outmap: &OutputMap, ctrl: &mut Controller, x: &MechState) -> Result<MechState> {
    let r = ctrl.compute(&hm.plant, outmap, x).map_err(as_fall)?;
    Ok(MechState { q: x.dq.clone(), dq: accel(&hm.plant, x, &r.u)? })
}

fn as_fall(e: Error) -> Error {
    match e {
        Error::PhaseOutOfRange { theta, .. } => Error::FallDetected(alloc::format!("phase {theta:.4} out of range")),
        other => other,
    }
}

/// Integrates one step with the controller evaluated at every RK4 stage,
/// stopping at the impact and applying the reset.
pub fn simulate_step(
    hm: &HybridModel,
    outmap: &OutputMap,
    cfg: &ControllerConfig,
    x0: &MechState,
    nominal_period: f64,
    record: bool,
) -> Result<StepTrace> {
    let mut ctrl = Controller::new(cfg.clone());
    let h = SHOOTING_STEP;
    let timeout = TIMEOUT_FACTOR * nominal_period;
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut samples = Vec::new();
    loop {
        if t > timeout {
            return Err(Error::StepTimeout { elapsed: t });
        }
        if let Some(p) = hm.torso_pitch(&x) {
            if p.abs() > TORSO_LIMIT {
                return Err(Error::FallDetected(alloc::format!("torso pitch {p:.4} rad")));
            }
        }
        if record {
            let r = ctrl.compute(&hm.plant, outmap, &x).map_err(as_fall)?;
            samples.push((r.theta, r.ustar, linalg::norm_inf(&r.eta)));
        }
        let xn = rk4_with(&x, h, |xs| controlled_field(hm, outmap, &mut ctrl, xs))?;
        let (g0, g1) = match (hm.guard(&x), hm.guard(&xn)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::InvalidParams("plant has no impact surface".into())),
        };
        if g1.armed && g0.height > 0.0 && g1.height <= 0.0 {
            let xs = x.clone();
            let tau = detect_impact(
                |tau| {
                    let xt = rk4_with(&xs, tau, |z| controlled_field(hm, outmap, &mut ctrl, z))?;
                    let g = hm.guard(&xt).ok_or(Error::NonFiniteDynamics)?;
                    Ok((g.height, g.rate))
                },
                h,
            )?;
            let pre = rk4_with(&xs, tau, |z| controlled_field(hm, outmap, &mut ctrl, z))?;
            let post = hm.reset(&pre)?;
            return Ok(StepTrace { pre_impact: pre, post_impact: post, duration: t + tau, samples });
        }
        x = xn;
        t += h;
    }
}

/// Post-impact state to post-impact state over one step.
pub fn poincare_map(
    hm: &HybridModel,
    outmap: &OutputMap,
    cfg: &ControllerConfig,
    x0: &MechState,
    nominal_period: f64,
) -> Result<MechState> {
    simulate_step(hm, outmap, cfg, x0, nominal_period, false).map(|s| s.post_impact)
}

/// Scans the post-impact phase rate on the zero-dynamics surface for a
/// fixed point of the restricted map, then refines it by bisection.
fn seed_on_zero_dynamics(
    hm: &HybridModel,
    outmap: &OutputMap,
    cfg: &ControllerConfig,
    template: &GaitTemplate,
) -> Result<MechState> {
    let theta0 = outmap.theta_range.0;
    let theta_index = 0;
    // generous period bound: the whole phase span at the slowest scanned rate
    let period = outmap.span() / template.min_rate;
    let gap = |rate: f64| -> Option<f64> {
        let x = on_zero_dynamics(outmap, theta0, rate).ok()?;
        let p = poincare_map(hm, outmap, cfg, &x, period).ok()?;
        Some(p.dq[theta_index] - x.dq[theta_index])
    };
    let n = 27;
    let mut prev: Option<(f64, f64)> = None;
    let mut best: Option<(f64, f64)> = None;
    for k in 0..=n {
        let r = template.min_rate + (template.max_rate - template.min_rate) * k as f64 / n as f64;
        let Some(g) = gap(r) else {
            prev = None;
            continue;
        };
        if best.is_none_or(|b| g.abs() < b.1.abs()) {
            best = Some((r, g));
        }
        if let Some((rp, gp)) = prev {
            // a stable fixed point has P(v) − v going from positive to negative
            if gp > 0.0 && g <= 0.0 {
                let (mut lo, mut hi) = (rp, r);
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    match gap(mid) {
                        Some(gm) if gm > 0.0 => lo = mid,
                        Some(_) => hi = mid,
                        None => break,
                    }
                    if hi - lo < 1e-10 {
                        break;
                    }
                }
                return on_zero_dynamics(outmap, theta0, 0.5 * (lo + hi));
            }
        }
        prev = Some((r, g));
    }
    match best {
        Some((r, _)) => on_zero_dynamics(outmap, theta0, r),
        None => Err(Error::NoConvergence { residual: f64::INFINITY }),
    }
}

/// Central-difference Jacobian of `x ↦ P(x)` in the stacked `(q, q̇)` coordinates.
pub fn poincare_jacobian(
    hm: &HybridModel,
    outmap: &OutputMap,
    cfg: &ControllerConfig,
    x: &MechState,
    period: f64,
) -> Result<Matrix> {
    let v = x.to_vec();
    let dim = v.len();
    let mut jac = Matrix::zeros(dim, dim);
    for j in 0..dim {
        let mut vp = v.clone();
        let mut vm = v.clone();
        vp[j] += FD_STEP;
        vm[j] -= FD_STEP;
        let pp = poincare_map(hm, outmap, cfg, &MechState::from_slice(&vp), period)?.to_vec();
        let pm = poincare_map(hm, outmap, cfg, &MechState::from_slice(&vm), period)?.to_vec();
        for i in 0..dim {
            jac[(i, j)] = (pp[i] - pm[i]) / (2.0 * FD_STEP);
        }
    }
    Ok(jac)
}

fn residual_of(
    hm: &HybridModel,
    outmap: &OutputMap,
    cfg: &ControllerConfig,
    x: &MechState,
    period: f64,
) -> Option<(Vec<f64>, f64)> {
    let p = poincare_map(hm, outmap, cfg, x, period).ok()?.to_vec();
    let r: Vec<f64> = p.iter().zip(x.to_vec()).map(|(a, b)| a - b).collect();
    let n = linalg::norm_inf(&r);
    Some((r, n))
}

/// Damped Newton on `P(x) − x`, seeded from the zero-dynamics scan unless a
/// seed is given. `clf` defines the min-norm controller used along the orbit.
pub fn find_periodic_gait(
    hm: &HybridModel,
    template: &GaitTemplate,
    clf: &Resclf,
    seed: Option<&MechState>,
) -> Result<GaitDesign> {
    let params = biped_params(hm)?;
    let outmap = design_outmap(params, template)?;
    let cfg = ControllerConfig::min_norm(clf.clone());
    cfg.validate(hm.plant.m())?;

    let mut x = match seed {
        Some(s) => s.clone(),
        None => seed_on_zero_dynamics(hm, &outmap, &cfg, template)?,
    };
    let period_guess = outmap.span() / x.dq[0].abs().max(template.min_rate);
    let period = simulate_step(hm, &outmap, &cfg, &x, 2.0 * period_guess, false)
        .map(|s| s.duration)
        .unwrap_or(period_guess);

    let (mut r, mut rn) =
        residual_of(hm, &outmap, &cfg, &x, period).ok_or(Error::NoConvergence { residual: f64::INFINITY })?;
    let mut iterations = 0;
    let mut damping = 1.0;
    while rn > 1e-10 && iterations < NEWTON_MAX_ITER {
        iterations += 1;
        let jac = poincare_jacobian(hm, &outmap, &cfg, &x, period)?;
        let dim = jac.rows();
        let a = jac.sub(&Matrix::identity(dim));
        let Some(step) = linalg::lstsq(&a, &r.iter().map(|v| -v).collect::<Vec<_>>()) else {
            break;
        };
        let mut improved = false;
        for _ in 0..20 {
            let xv = x.to_vec();
            let cand = MechState::from_slice(&xv.iter().zip(&step).map(|(a, b)| a + damping * b).collect::<Vec<_>>());
            if let Some((rc, rcn)) = residual_of(hm, &outmap, &cfg, &cand, period) {
                if rcn < rn {
                    x = cand;
                    r = rc;
                    rn = rcn;
                    improved = true;
                    damping = f64::min(1.0, 2.0 * damping);
                    break;
                }
            }
            damping *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if !(rn < NEWTON_TOL) {
        return Err(Error::NoConvergence { residual: rn });
    }

    let trace = simulate_step(hm, &outmap, &cfg, &x, period, true)?;
    let jac = poincare_jacobian(hm, &outmap, &cfg, &x, period)?;
    let spectral_radius = linalg::eigenvalues(&jac)
        .map(|ev| ev.iter().map(|(re, im)| libm::hypot(*re, *im)).fold(0.0, f64::max))
        .unwrap_or(f64::NAN);

    let mut thetas = Vec::with_capacity(trace.samples.len());
    let m = hm.plant.m();
    let mut rows: Vec<Vec<f64>> = vec![Vec::with_capacity(trace.samples.len()); m];
    let mut max_eta = 0.0f64;
    for (th, us, e) in &trace.samples {
        max_eta = max_eta.max(*e);
        // samples must stay strictly monotone for the regression
        if thetas.last().is_some_and(|last| th <= last) {
            continue;
        }
        thetas.push(*th);
        for i in 0..m {
            rows[i].push(us[i]);
        }
    }
    let fit = fit_bezier_ustar(&thetas, &rows, outmap.theta_range)?;
    let fit_res = fit_residual(&fit, &thetas, &rows, outmap.theta_range);
    let span = rows
        .iter()
        .map(|r| {
            let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        })
        .fold(0.0, f64::max);

    Ok(GaitDesign {
        outmap,
        fixed_point: x,
        step_period: trace.duration,
        ustar_fit: Some(fit),
        diagnostics: GaitDiagnostics {
            fixed_point_residual: rn,
            newton_iterations: iterations,
            max_eta_on_orbit: max_eta,
            ustar_fit_residual: fit_res,
            ustar_span: span,
            spectral_radius,
        },
    })
}
