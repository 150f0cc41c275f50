//! Dense primal-dual interior-point solver for small convex QPs
//!
//! ```text
//! minimize ½xᵀHx + fᵀx  subject to  Gx ≤ h
//! ```
//!
//! Mehrotra predictor-corrector on the slack form `Gx + s = h`, `s, λ ≥ 0`.
//! The Newton matrix carries a fixed Tikhonov term so rank-deficient `H`
//! never makes the reduced system singular; residuals are always measured
//! against the unregularized problem.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Matrix};

pub const MAX_VARS: usize = 10;
pub const MAX_CONSTRAINTS: usize = 25;
pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 20;
/// Regularization added to `H` inside the Newton matrix.
pub const NEWTON_REG: f64 = 1e-9;
/// Threshold on the Farkas ratio `−hᵀλ / ‖Gᵀλ‖₁`, relative to `1 + ‖x‖∞`.
pub const INFEASIBILITY_RATIO: f64 = 1e6;

const STEP_TO_BOUNDARY: f64 = 0.99;
const MAX_BACKTRACKS: usize = 40;
/// Centering used when the corrected direction fails the line search.
const FALLBACK_SIGMA: f64 = 0.3;

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub hess: Matrix,
    pub f: Vec<f64>,
    pub g: Matrix,
    pub h: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::MaxIterations => "max_iterations",
            QpStatus::Infeasible => "infeasible",
        }
    }
}

impl fmt::Display for QpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Residuals are relative: primal per row against `1 + |hᵢ|`, dual against
/// `1 + ‖f‖∞`, gap as `sᵀλ / (1 + |objective|)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

impl QpSolution {
    pub fn empty() -> Self {
        Self {
            x: Vec::new(),
            lambda: Vec::new(),
            status: QpStatus::MaxIterations,
            iterations: 0,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            gap: f64::INFINITY,
        }
    }
}

/// One row of the per-iteration debug trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpTraceRow {
    pub iter: usize,
    pub merit: f64,
    pub primal: f64,
    pub dual: f64,
    pub mu: f64,
    pub step: f64,
    pub sigma: f64,
}

impl QpTraceRow {
    pub const CSV_HEADER: &'static str = "iter,merit,primal,dual,mu,step,sigma";
}

impl QpProblem {
    pub fn new(hess: Matrix, f: Vec<f64>, g: Matrix, h: Vec<f64>) -> Result<Self> {
        let p = Self { hess, f, g, h };
        p.validate()?;
        Ok(p)
    }

    pub fn nv(&self) -> usize {
        self.f.len()
    }

    pub fn nc(&self) -> usize {
        self.h.len()
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.nv();
        let nc = self.nc();
        check_dim("QP Hessian rows", nv, self.hess.rows())?;
        check_dim("QP Hessian cols", nv, self.hess.cols())?;
        check_dim("QP constraint rows", nc, self.g.rows())?;
        if nc > 0 {
            check_dim("QP constraint cols", nv, self.g.cols())?;
        }
        if nv == 0 || nv > MAX_VARS || nc > MAX_CONSTRAINTS {
            return Err(Error::InvalidConfig(alloc::format!(
                "QP size {nv}x{nc} outside 1..={MAX_VARS} variables, 0..={MAX_CONSTRAINTS} constraints"
            )));
        }
        let finite = self.hess.is_finite()
            && self.g.is_finite()
            && self.f.iter().chain(&self.h).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidConfig("QP data contains non-finite entries".into()));
        }
        if !self.hess.is_symmetric(1e-12) {
            return Err(Error::InvalidConfig("QP Hessian is not symmetric".into()));
        }
        let lmin = linalg::symmetric_eigenvalues(&self.hess)[0];
        if lmin < -1e-10 * f64::max(1.0, self.hess.max_abs()) {
            return Err(Error::InvalidConfig(alloc::format!("QP Hessian is indefinite (eigenvalue {lmin:e})")));
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * self.hess.quad_form(x) + linalg::dot(&self.f, x)
    }

    /// Largest constraint violation `max(Gx − h, 0)`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let gx = self.g.mul_vec(x);
        gx.iter().zip(&self.h).fold(0.0, |m, (a, b)| f64::max(m, a - b))
    }
}

/// `(‖max(Gx − h, 0)‖∞, ‖Hx + f + Gᵀλ‖∞, ‖λ ⊙ (Gx − h)‖∞)`, unscaled.
pub fn kkt_residual(prob: &QpProblem, x: &[f64], lambda: &[f64]) -> (f64, f64, f64) {
    let gx = if prob.nc() > 0 { prob.g.mul_vec(x) } else { Vec::new() };
    let mut primal = 0.0f64;
    let mut comp = 0.0f64;
    for i in 0..prob.nc() {
        let r = gx[i] - prob.h[i];
        primal = primal.max(r.max(0.0));
        comp = comp.max((lambda[i] * r).abs());
    }
    let mut rd = prob.hess.mul_vec(x);
    for (j, v) in rd.iter_mut().enumerate() {
        *v += prob.f[j];
        for i in 0..prob.nc() {
            *v += prob.g[(i, j)] * lambda[i];
        }
    }
    (primal, linalg::norm_inf(&rd), comp)
}

/// Solver with a reusable workspace. After the first solve at a given size,
/// further solves of that size do not allocate.
#[derive(Clone, Debug, Default)]
pub struct QpSolver {
    nv: usize,
    nc: usize,
    s: Vec<f64>,
    lam: Vec<f64>,
    rd: Vec<f64>,
    rp: Vec<f64>,
    rc: Vec<f64>,
    gx: Vec<f64>,
    dx: Vec<f64>,
    ds: Vec<f64>,
    dlam: Vec<f64>,
    ds_aff: Vec<f64>,
    dlam_aff: Vec<f64>,
    kkt: Vec<f64>,
    rhs: Vec<f64>,
    tmp: Vec<f64>,
    xt: Vec<f64>,
    st: Vec<f64>,
    lt: Vec<f64>,
    trace_on: bool,
    trace: Vec<QpTraceRow>,
}

struct Residuals {
    rp: f64,
    rd: f64,
    mu: f64,
}

impl Residuals {
    fn merit(&self) -> f64 {
        self.rp + self.rd + self.mu
    }
}

impl QpSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps a per-iteration trace of the most recent solve.
    pub fn set_trace(&mut self, on: bool) {
        self.trace_on = on;
        if on {
            self.trace.reserve(64);
        }
    }

    pub fn trace(&self) -> &[QpTraceRow] {
        &self.trace
    }

    fn resize(&mut self, nv: usize, nc: usize) {
        if self.nv == nv && self.nc == nc && !self.kkt.is_empty() {
            return;
        }
        self.nv = nv;
        self.nc = nc;
        for v in [&mut self.s, &mut self.lam, &mut self.rp, &mut self.rc, &mut self.gx, &mut self.ds, &mut self.dlam]
        {
            v.clear();
            v.resize(nc, 0.0);
        }
        for v in [&mut self.ds_aff, &mut self.dlam_aff, &mut self.st, &mut self.lt, &mut self.tmp] {
            v.clear();
            v.resize(nc, 0.0);
        }
        for v in [&mut self.rd, &mut self.dx, &mut self.rhs, &mut self.xt] {
            v.clear();
            v.resize(nv, 0.0);
        }
        self.kkt.clear();
        self.kkt.resize(nv * nv, 0.0);
    }

    /// Convenience wrapper that allocates a fresh solution.
    pub fn solve(&mut self, prob: &QpProblem, max_iter: usize, tol: f64) -> QpSolution {
        let mut sol = QpSolution::empty();
        self.solve_into(prob, max_iter, tol, &mut sol);
        sol
    }

    /// Solves into `sol`, reusing its buffers.
    pub fn solve_into(&mut self, prob: &QpProblem, max_iter: usize, tol: f64, sol: &mut QpSolution) {
        let nv = prob.nv();
        let nc = prob.nc();
        let max_iter = max_iter.max(1);
        self.resize(nv, nc);
        self.trace.clear();
        sol.x.clear();
        sol.x.resize(nv, 0.0);
        sol.lambda.clear();
        sol.lambda.resize(nc, 0.0);

        self.initialize(prob, &mut sol.x);
        let mut res = self.residuals(prob, &sol.x);
        let mut status = QpStatus::MaxIterations;
        let mut iterations = 0;

        for k in 0..max_iter {
            if self.converged(prob, &sol.x, &res, tol) {
                status = QpStatus::Optimal;
                break;
            }
            if k >= 3 && self.infeasibility_detected(prob, &sol.x, tol) {
                status = QpStatus::Infeasible;
                break;
            }
            iterations = k + 1;
            let Some((step, sigma)) = self.iterate(prob, &mut sol.x, &res) else {
                // merit could not be decreased along the Newton direction
                if self.infeasibility_detected(prob, &sol.x, tol) {
                    status = QpStatus::Infeasible;
                }
                break;
            };
            res = self.residuals(prob, &sol.x);
            if self.trace_on {
                self.trace.push(QpTraceRow {
                    iter: iterations,
                    merit: res.merit(),
                    primal: res.rp,
                    dual: res.rd,
                    mu: res.mu,
                    step,
                    sigma,
                });
            }
        }
        if status == QpStatus::MaxIterations && self.converged(prob, &sol.x, &res, tol) {
            status = QpStatus::Optimal;
        }

        sol.lambda.copy_from_slice(&self.lam);
        sol.status = status;
        sol.iterations = iterations;
        let (p, d, g) = self.scaled_residuals(prob, &sol.x, &res);
        sol.primal_residual = p;
        sol.dual_residual = d;
        sol.gap = g;
    }

    /// Least-squares start followed by a positivity shift of `s` and `λ`.
    fn initialize(&mut self, prob: &QpProblem, x: &mut [f64]) {
        let nv = prob.nv();
        let nc = prob.nc();
        // (H + δI + GᵀG)x = −f + Gᵀh
        self.tmp.iter_mut().for_each(|w| *w = 1.0);
        if self.factor(prob) {
            for i in 0..nv {
                let mut acc = -prob.f[i];
                for r in 0..nc {
                    acc += prob.g[(r, i)] * prob.h[r];
                }
                self.rhs[i] = acc;
            }
            linalg::cholesky_solve_in_place(&self.kkt, nv, &mut self.rhs);
            x.copy_from_slice(&self.rhs);
        } else {
            x.iter_mut().for_each(|v| *v = 0.0);
        }
        if nc == 0 {
            return;
        }
        prob.g.mul_vec_into(x, &mut self.gx);
        let mut smin = f64::INFINITY;
        for i in 0..nc {
            self.s[i] = prob.h[i] - self.gx[i];
            smin = smin.min(self.s[i]);
        }
        let shift_s = if smin <= 0.0 { 1.0 - smin } else { 0.0 };
        let mut lmin = f64::INFINITY;
        for i in 0..nc {
            self.s[i] += shift_s;
            self.lam[i] = self.gx[i] - prob.h[i];
            lmin = lmin.min(self.lam[i]);
        }
        let shift_l = if lmin <= 0.0 { 1.0 - lmin } else { 0.0 };
        for l in self.lam.iter_mut() {
            *l += shift_l;
        }
    }

    /// Assembles and factors `H + δI + Gᵀ diag(w) G` with `w` taken from
    /// `tmp`, raising `δ` if roundoff breaks positive definiteness.
    fn factor(&mut self, prob: &QpProblem) -> bool {
        let nv = prob.nv();
        let scale = 1.0 + prob.hess.max_abs();
        for reg in [NEWTON_REG, 1e-6 * scale, 1e-3 * scale] {
            self.kkt.copy_from_slice(prob.hess.as_slice());
            for i in 0..nv {
                self.kkt[i * nv + i] += reg;
            }
            for r in 0..prob.nc() {
                let row = prob.g.row(r);
                for i in 0..nv {
                    let wi = self.tmp[r] * row[i];
                    if wi == 0.0 {
                        continue;
                    }
                    for j in 0..nv {
                        self.kkt[i * nv + j] += wi * row[j];
                    }
                }
            }
            if linalg::cholesky_in_place(&mut self.kkt, nv) {
                return true;
            }
        }
        false
    }

    fn residuals(&mut self, prob: &QpProblem, x: &[f64]) -> Residuals {
        compute_rd(prob, x, &self.lam, &mut self.rd);
        let nc = prob.nc();
        let mut rp = 0.0f64;
        let mut gap = 0.0;
        if nc > 0 {
            prob.g.mul_vec_into(x, &mut self.gx);
            for i in 0..nc {
                self.rp[i] = self.gx[i] + self.s[i] - prob.h[i];
                rp = rp.max(self.rp[i].abs());
                gap += self.s[i] * self.lam[i];
            }
        }
        let mu = if nc > 0 { gap / nc as f64 } else { 0.0 };
        Residuals { rp, rd: linalg::norm_inf(&self.rd), mu }
    }

    /// Primal rows are scaled by `1 + |hᵢ|`, the dual residual by the largest
    /// of the terms it sums, the gap by `1 + |objective|`.
    fn scaled_residuals(&self, prob: &QpProblem, x: &[f64], res: &Residuals) -> (f64, f64, f64) {
        let nv = prob.nv();
        let mut dscale = linalg::norm_inf(&prob.f);
        for j in 0..nv {
            let hx = linalg::dot(prob.hess.row(j), x);
            let mut gl = 0.0;
            for i in 0..prob.nc() {
                gl += prob.g[(i, j)] * self.lam[i];
            }
            dscale = dscale.max(hx.abs()).max(gl.abs());
        }
        let mut p = 0.0f64;
        for i in 0..prob.nc() {
            p = p.max(self.rp[i].abs() / (1.0 + prob.h[i].abs()));
        }
        let gap = res.mu * prob.nc() as f64 / (1.0 + prob.objective_no_alloc(x).abs());
        (p, res.rd / (1.0 + dscale), gap)
    }

    fn converged(&self, prob: &QpProblem, x: &[f64], res: &Residuals, tol: f64) -> bool {
        let (p, d, g) = self.scaled_residuals(prob, x, res);
        p <= tol && d <= tol && g <= tol
    }

    /// Farkas test: a nonnegative `λ` with `Gᵀλ ≈ 0` and `hᵀλ < 0` proves
    /// that no feasible point exists. For a feasible problem the ratio below
    /// is bounded by the norm of any feasible point.
    fn infeasibility_detected(&self, prob: &QpProblem, x: &[f64], tol: f64) -> bool {
        let nc = prob.nc();
        if nc == 0 {
            return false;
        }
        let mut stalled = false;
        for i in 0..nc {
            if self.rp[i].abs() > tol * (1.0 + prob.h[i].abs()) {
                stalled = true;
            }
        }
        if !stalled {
            return false;
        }
        let lmax = linalg::norm_inf(&self.lam);
        if !(lmax > 0.0) {
            return false;
        }
        let hl = -linalg::dot(&prob.h, &self.lam) / lmax;
        if hl <= 0.0 {
            return false;
        }
        let mut gl = 0.0;
        for j in 0..prob.nv() {
            let mut acc = 0.0;
            for i in 0..nc {
                acc += prob.g[(i, j)] * self.lam[i];
            }
            gl += (acc / lmax).abs();
        }
        hl > INFEASIBILITY_RATIO * (1.0 + linalg::norm_inf(x)) * gl
    }

    /// One predictor-corrector step with merit backtracking.
    /// Returns `(step, sigma)`, or `None` when no step decreases the merit.
    fn iterate(&mut self, prob: &QpProblem, x: &mut [f64], res: &Residuals) -> Option<(f64, f64)> {
        let nc = prob.nc();

        // H + δI + Gᵀ diag(λ/s) G
        for r in 0..nc {
            self.tmp[r] = self.lam[r] / self.s[r];
        }
        if !self.factor(prob) {
            return None;
        }

        // predictor
        for i in 0..nc {
            self.rc[i] = -self.s[i] * self.lam[i];
        }
        self.newton_direction(prob);
        let mut sigma = 0.0;
        if nc > 0 {
            self.ds_aff.copy_from_slice(&self.ds);
            self.dlam_aff.copy_from_slice(&self.dlam);
            let a_aff = self.max_step(1.0);
            let mut gap_aff = 0.0;
            for i in 0..nc {
                gap_aff += (self.s[i] + a_aff * self.ds[i]) * (self.lam[i] + a_aff * self.dlam[i]);
            }
            let mu_aff = gap_aff / nc as f64;
            sigma = if res.mu > 0.0 {
                let r = mu_aff / res.mu;
                (r * r * r).clamp(0.0, 1.0)
            } else {
                0.0
            };

            // corrector
            for i in 0..nc {
                self.rc[i] = -self.s[i] * self.lam[i] - self.ds_aff[i] * self.dlam_aff[i] + sigma * res.mu;
            }
            self.newton_direction(prob);
            if let Some(alpha) = self.line_search(prob, x, res.merit()) {
                return Some((alpha, sigma));
            }
            // The second-order term can make the corrected direction an
            // ascent direction for the complementarity part of the merit.
            // A plain centered step always descends.
            sigma = FALLBACK_SIGMA;
            for i in 0..nc {
                self.rc[i] = -self.s[i] * self.lam[i] + sigma * res.mu;
            }
            self.newton_direction(prob);
        }
        self.line_search(prob, x, res.merit()).map(|alpha| (alpha, sigma))
    }

    /// Backtracks from the fraction-to-boundary step until the merit does
    /// not increase, then accepts the trial point.
    fn line_search(&mut self, prob: &QpProblem, x: &mut [f64], merit0: f64) -> Option<f64> {
        let nv = prob.nv();
        let nc = prob.nc();
        let mut alpha = if nc > 0 { f64::min(1.0, STEP_TO_BOUNDARY * self.max_step(f64::INFINITY)) } else { 1.0 };
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..nv {
                self.xt[i] = x[i] + alpha * self.dx[i];
            }
            for i in 0..nc {
                self.st[i] = self.s[i] + alpha * self.ds[i];
                self.lt[i] = self.lam[i] + alpha * self.dlam[i];
            }
            if self.trial_merit(prob) <= merit0 {
                x.copy_from_slice(&self.xt);
                self.s.copy_from_slice(&self.st);
                self.lam.copy_from_slice(&self.lt);
                return Some(alpha);
            }
            alpha *= 0.5;
        }
        None
    }

    /// Solves the reduced Newton system for the current `rc` using the
    /// factored matrix in `kkt`; fills `dx`, `ds`, `dlam`.
    fn newton_direction(&mut self, prob: &QpProblem) {
        let nv = prob.nv();
        let nc = prob.nc();
        // tmp = (rc + λ∘rp)/s
        for i in 0..nc {
            self.tmp[i] = (self.rc[i] + self.lam[i] * self.rp[i]) / self.s[i];
        }
        for j in 0..nv {
            let mut acc = -self.rd[j];
            for i in 0..nc {
                acc -= prob.g[(i, j)] * self.tmp[i];
            }
            self.rhs[j] = acc;
        }
        linalg::cholesky_solve_in_place(&self.kkt, nv, &mut self.rhs);
        self.dx.copy_from_slice(&self.rhs);
        for i in 0..nc {
            let gdx = linalg::dot(prob.g.row(i), &self.dx);
            self.ds[i] = -self.rp[i] - gdx;
            self.dlam[i] = self.tmp[i] + self.lam[i] * gdx / self.s[i];
        }
    }

    /// Largest step in `(0, cap]` keeping `s` and `λ` nonnegative.
    fn max_step(&self, cap: f64) -> f64 {
        let mut a = cap;
        for i in 0..self.nc {
            if self.ds[i] < 0.0 {
                a = a.min(-self.s[i] / self.ds[i]);
            }
            if self.dlam[i] < 0.0 {
                a = a.min(-self.lam[i] / self.dlam[i]);
            }
        }
        if a.is_finite() {
            a
        } else {
            1.0
        }
    }

    fn trial_merit(&self, prob: &QpProblem) -> f64 {
        let nv = prob.nv();
        let nc = prob.nc();
        let mut rd = 0.0f64;
        for j in 0..nv {
            let mut acc = prob.f[j];
            let hrow = prob.hess.row(j);
            for k in 0..nv {
                acc += hrow[k] * self.xt[k];
            }
            for i in 0..nc {
                acc += prob.g[(i, j)] * self.lt[i];
            }
            rd = rd.max(acc.abs());
        }
        let mut rp = 0.0f64;
        let mut gap = 0.0;
        for i in 0..nc {
            let r = linalg::dot(prob.g.row(i), &self.xt) + self.st[i] - prob.h[i];
            rp = rp.max(r.abs());
            gap += self.st[i] * self.lt[i];
        }
        let mu = if nc > 0 { gap / nc as f64 } else { 0.0 };
        rp + rd + mu
    }
}

fn compute_rd(prob: &QpProblem, x: &[f64], lam: &[f64], out: &mut [f64]) {
    prob.hess.mul_vec_into(x, out);
    for j in 0..prob.nv() {
        out[j] += prob.f[j];
        for i in 0..prob.nc() {
            out[j] += prob.g[(i, j)] * lam[i];
        }
    }
}

impl QpProblem {
    fn objective_no_alloc(&self, x: &[f64]) -> f64 {
        let nv = self.nv();
        let mut acc = 0.0;
        for i in 0..nv {
            let row = self.hess.row(i);
            acc += 0.5 * x[i] * linalg::dot(row, x) + self.f[i] * x[i];
        }
        acc
    }
}

/// One-shot solve with a fresh workspace.
pub fn solve_qp(prob: &QpProblem, max_iter: usize, tol: f64) -> QpSolution {
    QpSolver::new().solve(prob, max_iter, tol)
}
