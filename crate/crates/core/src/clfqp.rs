//! Pointwise min-norm control, and soft and hard torque-saturation QPs built
//! on the RES-CLF decrease condition.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::bezier::{self, Bezier};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Matrix};
use crate::mechsys::{io_linearize, transverse_state, IOLinearization, MechState, OutputMap};
use crate::models::PlantModel;
use crate::qp::{QpProblem, QpSolution, QpSolver, QpStatus, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::resclf::{eval_psi, eval_v, PsiPair, Resclf};

/// Below this `‖ψ₁‖` the min-norm law has no usable direction.
pub const DEGENERATE_GRADIENT: f64 = 1e-12;
/// Largest Bernstein design condition number accepted by the regression.
pub const MAX_FIT_COND: f64 = 1e10;

#[derive(Clone, Debug, PartialEq)]
pub enum SaturationSpec {
    None,
    Constant {
        umin: Vec<f64>,
        umax: Vec<f64>,
    },
    /// `u*(θ) + offsets`, with `u*` regressed over the phase range.
    Dynamic {
        offsets_lo: Vec<f64>,
        offsets_hi: Vec<f64>,
        ustar_fit: Bezier,
        theta_range: (f64, f64),
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ControllerMode {
    MinNormClosedForm,
    SoftQp,
    HardQp,
}

impl ControllerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerMode::MinNormClosedForm => "min_norm",
            ControllerMode::SoftQp => "soft_qp",
            ControllerMode::HardQp => "hard_qp",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerConfig {
    pub mode: ControllerMode,
    /// Penalty on the CLF relaxation `d₁`.
    pub p1: f64,
    /// Penalty on the torque relaxations `d₂`, `d₃`.
    pub p2: f64,
    pub sat: SaturationSpec,
    pub clf: Resclf,
    pub qp_max_iter: usize,
    pub qp_tol: f64,
    /// Clamp the min-norm torque into the saturation bounds after the fact.
    pub blind_clamp: bool,
}

/// Per-tick outcome of the solver, with the closed form reported separately.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TickStatus {
    ClosedForm,
    Optimal,
    MaxIterations,
    Infeasible,
}

impl TickStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TickStatus::ClosedForm => "closed_form",
            TickStatus::Optimal => "optimal",
            TickStatus::MaxIterations => "max_iterations",
            TickStatus::Infeasible => "infeasible",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [TickStatus::ClosedForm, TickStatus::Optimal, TickStatus::MaxIterations, TickStatus::Infeasible]
            .into_iter()
            .find(|t| t.as_str() == s)
    }
}

impl From<QpStatus> for TickStatus {
    fn from(s: QpStatus) -> Self {
        match s {
            QpStatus::Optimal => TickStatus::Optimal,
            QpStatus::MaxIterations => TickStatus::MaxIterations,
            QpStatus::Infeasible => TickStatus::Infeasible,
        }
    }
}

impl fmt::Display for TickStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Torque bounds in effect at one tick.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    pub umin: Vec<f64>,
    pub umax: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlTickResult {
    pub u: Vec<f64>,
    pub mu: Vec<f64>,
    pub d1: f64,
    pub d2: Vec<f64>,
    pub d3: Vec<f64>,
    pub status: TickStatus,
    pub v: f64,
    /// `ψ₀ − (c₃/ε)V + ψ₁ᵀμ`.
    pub vdot_pred: f64,
    pub clamped: bool,
    /// Largest move made when projecting an Optimal hard-QP torque onto its
    /// box; bounded by the solver's primal tolerance.
    pub polish: f64,
    pub eta: Vec<f64>,
    pub theta: f64,
    pub ustar: Vec<f64>,
    pub bounds: Option<Bounds>,
    pub qp_iterations: usize,
}

impl SaturationSpec {
    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            SaturationSpec::None => Ok(()),
            SaturationSpec::Constant { umin, umax } => {
                check_dim("umin", m, umin.len())?;
                check_dim("umax", m, umax.len())?;
                for i in 0..m {
                    if !(umin[i] < umax[i]) || !umin[i].is_finite() || !umax[i].is_finite() {
                        return Err(Error::InvalidConfig(format!(
                            "umin[{i}] = {} must be below umax[{i}] = {}",
                            umin[i], umax[i]
                        )));
                    }
                }
                Ok(())
            }
            SaturationSpec::Dynamic { offsets_lo, offsets_hi, ustar_fit, theta_range } => {
                check_dim("offsets_lo", m, offsets_lo.len())?;
                check_dim("offsets_hi", m, offsets_hi.len())?;
                check_dim("ustar_fit rows", m, ustar_fit.rows())?;
                for i in 0..m {
                    if !(offsets_lo[i] <= 0.0 && 0.0 <= offsets_hi[i]) {
                        return Err(Error::InvalidConfig(format!(
                            "offsets_lo[{i}] = {} must be <= 0 <= offsets_hi[{i}] = {}",
                            offsets_lo[i], offsets_hi[i]
                        )));
                    }
                }
                if !(theta_range.0 < theta_range.1) {
                    return Err(Error::InvalidConfig("Dynamic theta_range must be increasing".into()));
                }
                Ok(())
            }
        }
    }

    pub fn bounds_at(&self, theta: f64) -> Option<Bounds> {
        match self {
            SaturationSpec::None => None,
            SaturationSpec::Constant { umin, umax } => Some(Bounds { umin: umin.clone(), umax: umax.clone() }),
            SaturationSpec::Dynamic { .. } => dynamic_bounds(self, theta).map(|(umin, umax)| Bounds { umin, umax }),
        }
    }
}

/// `u*(s(θ)) + offsets`, phase clamped to `[0, 1]`. `None` unless `sat` is Dynamic.
pub fn dynamic_bounds(sat: &SaturationSpec, theta: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    let SaturationSpec::Dynamic { offsets_lo, offsets_hi, ustar_fit, theta_range } = sat else {
        return None;
    };
    let s = ((theta - theta_range.0) / (theta_range.1 - theta_range.0)).clamp(0.0, 1.0);
    let u = ustar_fit.eval(s);
    let lo = u.iter().zip(offsets_lo).map(|(a, b)| a + b).collect();
    let hi = u.iter().zip(offsets_hi).map(|(a, b)| a + b).collect();
    Some((lo, hi))
}

impl ControllerConfig {
    /// Closed-form min-norm controller with default solver knobs.
    pub fn min_norm(clf: Resclf) -> Self {
        Self {
            mode: ControllerMode::MinNormClosedForm,
            p1: 0.0,
            p2: 0.0,
            sat: SaturationSpec::None,
            clf,
            qp_max_iter: DEFAULT_MAX_ITER,
            qp_tol: DEFAULT_TOL,
            blind_clamp: false,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        check_dim("CLF outputs", m, self.clf.m())?;
        self.sat.validate(m)?;
        if !(self.qp_tol > 0.0) || self.qp_max_iter == 0 {
            return Err(Error::InvalidConfig("qp_tol must be > 0 and qp_max_iter >= 1".into()));
        }
        match self.mode {
            ControllerMode::MinNormClosedForm => {
                if self.blind_clamp && self.sat == SaturationSpec::None {
                    return Err(Error::InvalidConfig("blind_clamp needs saturation bounds".into()));
                }
            }
            ControllerMode::HardQp => {
                if !(self.p1 > 0.0) {
                    return Err(Error::InvalidConfig(format!("p1 must be > 0 for the hard QP, got {}", self.p1)));
                }
            }
            ControllerMode::SoftQp => {
                if !(self.p1 > 0.0 && self.p2 > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "p1 and p2 must be > 0 for the soft QP, got {} and {}",
                        self.p1, self.p2
                    )));
                }
            }
        }
        if self.mode != ControllerMode::MinNormClosedForm && self.sat == SaturationSpec::None {
            return Err(Error::InvalidConfig("QP modes need saturation bounds".into()));
        }
        Ok(())
    }
}

/// Smallest `μ` with `ψ₀ + ψ₁ᵀμ ≤ 0`.
pub fn min_norm_mu(psi: &PsiPair) -> Result<Vec<f64>> {
    let m = psi.psi1.len();
    if !(psi.psi0 > 0.0) {
        return Ok(vec![0.0; m]);
    }
    let nn = linalg::dot(&psi.psi1, &psi.psi1);
    if libm::sqrt(nn) < DEGENERATE_GRADIENT {
        return Err(Error::DegenerateGradient);
    }
    Ok(psi.psi1.iter().map(|g| -psi.psi0 * g / nn).collect())
}

fn offset_bounds(io: &IOLinearization, bounds: &Bounds) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = io.ustar.len();
    check_dim("umin", m, bounds.umin.len())?;
    check_dim("umax", m, bounds.umax.len())?;
    let lo = (0..m).map(|i| bounds.umin[i] - io.ustar[i]).collect();
    let hi = (0..m).map(|i| bounds.umax[i] - io.ustar[i]).collect();
    Ok((lo, hi))
}

/// Decision vector `[μ; d₁]`, cost `μᵀμ + p₁d₁²`, CLF constraint relaxed by
/// `d₁`, torque bounds `umin ≤ u* + Adec⁻¹μ ≤ umax` kept hard.
pub fn build_hard_qp(psi: &PsiPair, io: &IOLinearization, bounds: &Bounds, p1: f64) -> Result<QpProblem> {
    let m = io.ustar.len();
    check_dim("psi1", m, psi.psi1.len())?;
    let (lo, hi) = offset_bounds(io, bounds)?;
    let nv = m + 1;
    let nc = 1 + 2 * m;
    let mut hd = vec![2.0; nv];
    hd[m] = 2.0 * p1;
    let mut g = Matrix::zeros(nc, nv);
    let mut h = vec![0.0; nc];
    for j in 0..m {
        g[(0, j)] = psi.psi1[j];
    }
    g[(0, m)] = -1.0;
    h[0] = -psi.psi0;
    for i in 0..m {
        for j in 0..m {
            g[(1 + i, j)] = io.adec_inv[(i, j)];
            g[(1 + m + i, j)] = -io.adec_inv[(i, j)];
        }
        h[1 + i] = hi[i];
        h[1 + m + i] = -lo[i];
    }
    QpProblem::new(Matrix::from_diag(&hd), vec![0.0; nv], g, h)
}

/// Decision vector `[μ; d₁; d₂; d₃]` with `d₂, d₃ ≥ 0` relaxing the lower and
/// upper torque bounds; cost `μᵀμ + p₁d₁² + p₂(d₂ᵀd₂ + d₃ᵀd₃)`.
pub fn build_soft_qp(psi: &PsiPair, io: &IOLinearization, bounds: &Bounds, p1: f64, p2: f64) -> Result<QpProblem> {
    let m = io.ustar.len();
    check_dim("psi1", m, psi.psi1.len())?;
    let (lo, hi) = offset_bounds(io, bounds)?;
    let nv = 3 * m + 1;
    let nc = 1 + 4 * m;
    let mut hd = vec![2.0; nv];
    hd[m] = 2.0 * p1;
    for v in hd.iter_mut().skip(m + 1) {
        *v = 2.0 * p2;
    }
    let (i_d2, i_d3) = (m + 1, 2 * m + 1);
    let mut g = Matrix::zeros(nc, nv);
    let mut h = vec![0.0; nc];
    for j in 0..m {
        g[(0, j)] = psi.psi1[j];
    }
    g[(0, m)] = -1.0;
    h[0] = -psi.psi0;
    for i in 0..m {
        let (r_lo, r_hi) = (1 + i, 1 + m + i);
        for j in 0..m {
            g[(r_lo, j)] = -io.adec_inv[(i, j)];
            g[(r_hi, j)] = io.adec_inv[(i, j)];
        }
        g[(r_lo, i_d2 + i)] = -1.0;
        h[r_lo] = -lo[i];
        g[(r_hi, i_d3 + i)] = -1.0;
        h[r_hi] = hi[i];
        g[(1 + 2 * m + i, i_d2 + i)] = -1.0;
        g[(1 + 3 * m + i, i_d3 + i)] = -1.0;
    }
    QpProblem::new(Matrix::from_diag(&hd), vec![0.0; nv], g, h)
}

/// Least-squares degree-5 Bézier fit of `u*(θ)` over the normalized phase.
/// `ustar_samples` holds one row per input channel.
pub fn fit_bezier_ustar(theta_samples: &[f64], ustar_samples: &[Vec<f64>], theta_range: (f64, f64)) -> Result<Bezier> {
    let k = theta_samples.len();
    if k < bezier::NUM_POINTS {
        return Err(Error::InvalidConfig(format!("need at least {} samples, got {k}", bezier::NUM_POINTS)));
    }
    if !(theta_range.0 < theta_range.1) {
        return Err(Error::InvalidConfig("theta_range must be increasing".into()));
    }
    let increasing = theta_samples.windows(2).all(|w| w[1] > w[0]);
    let decreasing = theta_samples.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) {
        return Err(Error::InvalidConfig("theta samples must be strictly monotone".into()));
    }
    let span = theta_range.1 - theta_range.0;
    let phases: Vec<f64> = theta_samples.iter().map(|t| (t - theta_range.0) / span).collect();
    let design = bezier::bernstein_design(&phases);
    let cond = linalg::condition_number(&design);
    if !(cond <= MAX_FIT_COND) {
        return Err(Error::RankDeficientFit { cond });
    }
    let mut points = Vec::with_capacity(ustar_samples.len());
    for row in ustar_samples {
        check_dim("u* samples", k, row.len())?;
        let sol = linalg::lstsq(&design, row).ok_or(Error::RankDeficientFit { cond })?;
        let mut p = [0.0; bezier::NUM_POINTS];
        p.copy_from_slice(&sol);
        points.push(p);
    }
    Ok(Bezier::new(points))
}

/// Largest absolute deviation of a fit from its samples.
pub fn fit_residual(fit: &Bezier, theta_samples: &[f64], ustar_samples: &[Vec<f64>], theta_range: (f64, f64)) -> f64 {
    let span = theta_range.1 - theta_range.0;
    let mut worst = 0.0f64;
    for (k, t) in theta_samples.iter().enumerate() {
        let b = fit.eval((t - theta_range.0) / span);
        for (i, row) in ustar_samples.iter().enumerate() {
            worst = worst.max((b[i] - row[k]).abs());
        }
    }
    worst
}

/// A controller instance with its own solver workspace.
#[derive(Clone, Debug)]
pub struct Controller {
    pub cfg: ControllerConfig,
    solver: QpSolver,
    sol: QpSolution,
}

impl Controller {
    pub fn new(cfg: ControllerConfig) -> Self {
        Self { cfg, solver: QpSolver::new(), sol: QpSolution::empty() }
    }

    pub fn solver_mut(&mut self) -> &mut QpSolver {
        &mut self.solver
    }

    pub fn compute(&mut self, plant: &PlantModel, outmap: &OutputMap, x: &MechState) -> Result<ControlTickResult> {
        let m = plant.m();
        let io = io_linearize(plant, outmap, x)?;
        let eta = transverse_state(outmap, x)?.eta;
        let theta = outmap.theta(&x.q);
        let clf = &self.cfg.clf;
        let v = eval_v(clf, &eta);
        let psi = eval_psi(clf, &eta);
        let bounds = self.cfg.sat.bounds_at(theta);

        let mut d1 = 0.0;
        let mut d2 = vec![0.0; m];
        let mut d3 = vec![0.0; m];
        let mut clamped = false;
        let mut qp_iterations = 0;
        let (mut mu, status) = match self.cfg.mode {
            ControllerMode::MinNormClosedForm => {
                let mu = match min_norm_mu(&psi) {
                    Ok(mu) => mu,
                    Err(Error::DegenerateGradient) => {
                        // on the orbit itself psi0 is pure round-off
                        if psi.psi0 > DEGENERATE_GRADIENT {
                            log::warn!("min-norm law: psi0 = {:e} with vanishing psi1, using mu = 0", psi.psi0);
                        }
                        vec![0.0; m]
                    }
                    Err(e) => return Err(e),
                };
                (mu, TickStatus::ClosedForm)
            }
            ControllerMode::HardQp | ControllerMode::SoftQp => {
                let b = bounds.as_ref().ok_or_else(|| Error::InvalidConfig("QP modes need saturation bounds".into()))?;
                let prob = if self.cfg.mode == ControllerMode::HardQp {
                    build_hard_qp(&psi, &io, b, self.cfg.p1)?
                } else {
                    build_soft_qp(&psi, &io, b, self.cfg.p1, self.cfg.p2)?
                };
                self.solver.solve_into(&prob, self.cfg.qp_max_iter, self.cfg.qp_tol, &mut self.sol);
                qp_iterations = self.sol.iterations;
                let xs = &self.sol.x;
                d1 = xs[m];
                if self.cfg.mode == ControllerMode::SoftQp {
                    d2.copy_from_slice(&xs[m + 1..2 * m + 1]);
                    d3.copy_from_slice(&xs[2 * m + 1..3 * m + 1]);
                }
                if self.sol.status != QpStatus::Optimal {
                    log::debug!(
                        "QP {} after {} iterations at theta = {theta:.6}",
                        self.sol.status,
                        self.sol.iterations
                    );
                    clamped = true;
                }
                (xs[..m].to_vec(), TickStatus::from(self.sol.status))
            }
        };

        let mut u = crate::mechsys::apply_precontrol(&io, &mu)?;
        let mut polish = 0.0f64;
        let project = match self.cfg.mode {
            ControllerMode::MinNormClosedForm => self.cfg.blind_clamp,
            ControllerMode::HardQp => true,
            ControllerMode::SoftQp => false,
        };
        if project {
            if let Some(b) = &bounds {
                let mut changed = false;
                for i in 0..m {
                    let c = u[i].clamp(b.umin[i], b.umax[i]);
                    if c != u[i] {
                        changed = true;
                        polish = polish.max((c - u[i]).abs());
                    }
                    u[i] = c;
                }
                if changed {
                    // keep μ consistent with the torque actually applied, and
                    // report the CLF relaxation that torque really needs
                    let du: Vec<f64> = (0..m).map(|i| u[i] - io.ustar[i]).collect();
                    mu = io.adec.mul_vec(&du);
                    if self.cfg.mode == ControllerMode::HardQp {
                        d1 = d1.max(psi.psi0 + linalg::dot(&psi.psi1, &mu));
                    }
                }
                if self.cfg.mode == ControllerMode::MinNormClosedForm {
                    clamped = changed;
                }
            }
        }
        if clamped || self.cfg.mode != ControllerMode::HardQp {
            polish = 0.0;
        }

        let vdot_pred = psi.psi0 - clf.decay_rate() * v + linalg::dot(&psi.psi1, &mu);
        Ok(ControlTickResult {
            u,
            mu,
            d1,
            d2,
            d3,
            status,
            v,
            vdot_pred,
            clamped,
            polish,
            eta,
            theta,
            ustar: io.ustar,
            bounds,
            qp_iterations,
        })
    }
}

/// Stateless convenience wrapper around [`Controller::compute`].
pub fn compute_control(
    cfg: &ControllerConfig,
    plant: &PlantModel,
    outmap: &OutputMap,
    x: &MechState,
) -> Result<ControlTickResult> {
    Controller::new(cfg.clone()).compute(plant, outmap, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::solve_qp;

    fn io_identity(ustar: &[f64]) -> IOLinearization {
        let m = ustar.len();
        IOLinearization {
            adec: Matrix::identity(m),
            adec_inv: Matrix::identity(m),
            lf2y: ustar.iter().map(|v| -v).collect(),
            ustar: ustar.to_vec(),
            cond: 1.0,
        }
    }

    #[test]
    fn min_norm_branches() {
        let off = min_norm_mu(&PsiPair { psi0: -1.0, psi1: vec![3.0, 4.0] }).unwrap();
        assert_eq!(off, vec![0.0, 0.0]);
        let on = min_norm_mu(&PsiPair { psi0: 1.0, psi1: vec![1.0, 0.0] }).unwrap();
        assert_eq!(on, vec![-1.0, 0.0]);
        let deg = min_norm_mu(&PsiPair { psi0: 1.0, psi1: vec![0.0, 0.0] });
        assert_eq!(deg, Err(Error::DegenerateGradient));
    }

    #[test]
    fn hard_qp_closed_form_slack() {
        // with the bounds inactive the optimum is μ = −tψ₁, d₁ = ψ₀/(1 + p₁‖ψ₁‖²)
        let psi = PsiPair { psi0: 2.0, psi1: vec![1.0, -2.0] };
        let b = Bounds { umin: vec![-1e6; 2], umax: vec![1e6; 2] };
        let p1 = 50.0;
        let prob = build_hard_qp(&psi, &io_identity(&[0.0, 0.0]), &b, p1).unwrap();
        let s = solve_qp(&prob, 40, 1e-12);
        assert_eq!(s.status, QpStatus::Optimal);
        let want_d1 = 2.0 / (1.0 + p1 * 5.0);
        assert!((s.x[2] - want_d1).abs() < 1e-8, "{} vs {want_d1}", s.x[2]);
    }

    #[test]
    fn soft_qp_zero_at_origin() {
        let psi = PsiPair { psi0: 0.0, psi1: vec![0.0, 0.0] };
        let b = Bounds { umin: vec![-8.0, -12.0], umax: vec![8.0, 12.0] };
        let prob = build_soft_qp(&psi, &io_identity(&[1.0, -1.0]), &b, 50.0, 75.0).unwrap();
        assert_eq!(prob.nv(), 7);
        let s = solve_qp(&prob, 30, 1e-10);
        assert_eq!(s.status, QpStatus::Optimal);
        // d₂, d₃ sit on their bounds with zero multipliers, so the interior
        // point only approaches them like the square root of the gap
        assert!(s.x[..2].iter().all(|v| v.abs() < 1e-9));
        assert!(s.x[2..].iter().all(|v| v.abs() < 1e-5));
        assert!(prob.objective(&s.x) < 1e-8);
    }

    #[test]
    fn soft_qp_relaxes_violated_upper_bound() {
        let psi = PsiPair { psi0: 0.0, psi1: vec![0.0, 0.0] };
        let b = Bounds { umin: vec![-8.0, -8.0], umax: vec![8.0, 8.0] };
        let prob = build_soft_qp(&psi, &io_identity(&[9.0, 0.0]), &b, 50.0, 75.0).unwrap();
        let s = solve_qp(&prob, 30, 1e-10);
        assert_eq!(s.status, QpStatus::Optimal);
        assert!(s.x[2 * 2 + 1] > 1e-3);
    }

    #[test]
    fn hard_qp_puts_outside_feedforward_on_the_bound() {
        let psi = PsiPair { psi0: 0.0, psi1: vec![0.0, 0.0] };
        let b = Bounds { umin: vec![-8.0, -8.0], umax: vec![8.0, 8.0] };
        let io = io_identity(&[9.0, 0.0]);
        let prob = build_hard_qp(&psi, &io, &b, 50.0).unwrap();
        let s = solve_qp(&prob, 30, 1e-10);
        assert_eq!(s.status, QpStatus::Optimal);
        let u = crate::mechsys::apply_precontrol(&io, &s.x[..2]).unwrap();
        assert!((u[0] - 8.0).abs() < 1e-7 && u[0] <= 8.0 + 1e-8);
    }

    #[test]
    fn dynamic_band() {
        let fit = Bezier::new(vec![[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]]);
        let sat = SaturationSpec::Dynamic {
            offsets_lo: vec![-2.0],
            offsets_hi: vec![3.0],
            ustar_fit: fit.clone(),
            theta_range: (-0.2, 0.2),
        };
        for t in [-0.3, -0.2, 0.0, 0.1, 0.5] {
            let (lo, hi) = dynamic_bounds(&sat, t).unwrap();
            assert!((hi[0] - lo[0] - 5.0).abs() < 1e-12);
        }
        let flat = SaturationSpec::Dynamic {
            offsets_lo: vec![0.0],
            offsets_hi: vec![0.0],
            ustar_fit: fit.clone(),
            theta_range: (-0.2, 0.2),
        };
        let (lo, hi) = dynamic_bounds(&flat, 0.0).unwrap();
        assert_eq!(lo, hi);
        assert!((lo[0] - fit.eval(0.5)[0]).abs() < 1e-15);
        assert!(dynamic_bounds(&SaturationSpec::None, 0.0).is_none());
    }

    #[test]
    fn saturation_validation() {
        let bad = SaturationSpec::Constant { umin: vec![1.0, -1.0], umax: vec![1.0, 1.0] };
        assert!(matches!(bad.validate(2), Err(Error::InvalidConfig(msg)) if msg.contains("umin[0]")));
        let bad_dyn = SaturationSpec::Dynamic {
            offsets_lo: vec![0.5],
            offsets_hi: vec![1.0],
            ustar_fit: Bezier::constant(&[0.0]),
            theta_range: (0.0, 1.0),
        };
        assert!(bad_dyn.validate(1).is_err());
    }

    #[test]
    fn fit_constant_and_known_curve() {
        let thetas: Vec<f64> = (0..20).map(|k| -0.2 + 0.4 * k as f64 / 19.0).collect();
        let constant = vec![vec![3.5; 20]];
        let fit = fit_bezier_ustar(&thetas, &constant, (-0.2, 0.2)).unwrap();
        assert!(fit.points()[0].iter().all(|p| (p - 3.5).abs() < 1e-12));

        let truth = Bezier::new(vec![[1.0, -2.0, 0.5, 4.0, -1.0, 2.0]]);
        let samples = vec![thetas.iter().map(|t| truth.eval((t + 0.2) / 0.4)[0]).collect::<Vec<_>>()];
        let fit = fit_bezier_ustar(&thetas, &samples, (-0.2, 0.2)).unwrap();
        for (a, b) in fit.points()[0].iter().zip(&truth.points()[0]) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(fit_residual(&fit, &thetas, &samples, (-0.2, 0.2)) < 1e-10);
    }

    #[test]
    fn fit_rejects_clustered_samples() {
        let thetas: Vec<f64> = (0..10).map(|k| 1e-6 * k as f64).collect();
        let samples = vec![vec![0.0; 10]];
        assert!(matches!(fit_bezier_ustar(&thetas, &samples, (-1.0, 1.0)), Err(Error::RankDeficientFit { .. })));
        let few = [0.0, 0.1, 0.2];
        assert!(fit_bezier_ustar(&few, &[vec![0.0; 3]], (0.0, 1.0)).is_err());
    }
}
