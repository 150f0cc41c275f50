//! Controlled Lagrangian systems `D(q)q̈ + C(q,q̇)q̇ + G(q) = B(q)u` with
//! relative-degree-two outputs `y = H₀q − y_d(s(θ))`, and the input-output
//! linearization built on them.

use alloc::vec::Vec;

use crate::bezier::Bezier;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Lu, Matrix};
use crate::models::PlantModel;

/// Largest decoupling-matrix condition number accepted for inversion.
pub const MAX_DECOUPLING_COND: f64 = 1e8;

/// Fraction of the phase span tolerated beyond either end before the
/// phase is declared out of range.
pub const PHASE_GUARD_FRACTION: f64 = 0.2;

/// Configuration and velocity of a mechanical system.
#[derive(Clone, Debug, PartialEq)]
pub struct MechState {
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
}

impl MechState {
    pub fn new(q: Vec<f64>, dq: Vec<f64>) -> Result<Self> {
        check_dim("velocity", q.len(), dq.len())?;
        if q.len() < 2 {
            return Err(Error::Dimension { what: "configuration (n >= 2)", expected: 2, got: q.len() });
        }
        let s = Self { q, dq };
        if !s.is_finite() {
            return Err(Error::NonFiniteDynamics);
        }
        Ok(s)
    }

    pub fn zeros(n: usize) -> Self {
        Self { q: alloc::vec![0.0; n], dq: alloc::vec![0.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.dq).all(|v| v.is_finite())
    }

    /// `[q; q̇]` as one vector.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.q.clone();
        v.extend_from_slice(&self.dq);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let n = v.len() / 2;
        Self { q: v[..n].to_vec(), dq: v[n..].to_vec() }
    }

    /// Infinity-norm distance between two states.
    pub fn distance(&self, other: &MechState) -> f64 {
        self.q
            .iter()
            .chain(&self.dq)
            .zip(other.q.iter().chain(&other.dq))
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }
}

/// Dynamics terms at one state.
#[derive(Clone, Debug)]
pub struct DynamicsEval {
    /// Inertia matrix `D(q)`.
    pub d: Matrix,
    /// Coriolis/centrifugal term `C(q,q̇)q̇`.
    pub cdq: Vec<f64>,
    /// Gravity term `G(q)`.
    pub gvec: Vec<f64>,
    /// Input matrix `B(q)`.
    pub b: Matrix,
}

/// Relative-degree-two outputs `y = H₀q − y_d(s)`, with phase `θ = cᵀq`
/// normalized to `s = (θ − θ⁻)/(θ⁺ − θ⁻)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputMap {
    pub h0: Matrix,
    pub theta_coeffs: Vec<f64>,
    pub yd: Bezier,
    pub theta_range: (f64, f64),
}

/// Outputs and phase at one state.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputEval {
    pub y: Vec<f64>,
    pub ydot: Vec<f64>,
    pub theta: f64,
    pub thetadot: f64,
}

/// Decoupling matrix `L_gL_f y`, drift `L_f²y` and feedforward `u*`.
#[derive(Clone, Debug)]
pub struct IOLinearization {
    pub adec: Matrix,
    pub adec_inv: Matrix,
    pub lf2y: Vec<f64>,
    pub ustar: Vec<f64>,
    pub cond: f64,
}

/// Transverse coordinates `η = [y; ẏ]`. The zero-dynamics coordinates are
/// never formed; simulation carries the full `(q, q̇)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransverseState {
    pub eta: Vec<f64>,
}

impl OutputMap {
    pub fn new(h0: Matrix, theta_coeffs: Vec<f64>, yd: Bezier, theta_range: (f64, f64)) -> Result<Self> {
        check_dim("phase coefficients", h0.cols(), theta_coeffs.len())?;
        check_dim("desired-output rows", h0.rows(), yd.rows())?;
        if !(theta_range.0 < theta_range.1) {
            return Err(Error::InvalidConfig(alloc::format!(
                "theta_range: lower bound {} must be below upper bound {}",
                theta_range.0,
                theta_range.1
            )));
        }
        Ok(Self { h0, theta_coeffs, yd, theta_range })
    }

    /// Number of outputs.
    pub fn m(&self) -> usize {
        self.h0.rows()
    }

    pub fn n(&self) -> usize {
        self.h0.cols()
    }

    pub fn span(&self) -> f64 {
        self.theta_range.1 - self.theta_range.0
    }

    pub fn theta(&self, q: &[f64]) -> f64 {
        linalg::dot(&self.theta_coeffs, q)
    }

    /// Normalized phase (not clamped).
    pub fn phase(&self, theta: f64) -> f64 {
        (theta - self.theta_range.0) / self.span()
    }

    pub fn check_phase(&self, theta: f64) -> Result<()> {
        let pad = PHASE_GUARD_FRACTION * self.span();
        let (lo, hi) = (self.theta_range.0 - pad, self.theta_range.1 + pad);
        if theta < lo || theta > hi || !theta.is_finite() {
            return Err(Error::PhaseOutOfRange { theta, lo, hi });
        }
        Ok(())
    }
}

pub fn eval_dynamics(plant: &PlantModel, x: &MechState) -> Result<DynamicsEval> {
    check_dim("state", plant.n(), x.dim())?;
    if !x.is_finite() {
        return Err(Error::NonFiniteDynamics);
    }
    let dyn_ = plant.dynamics(x);
    if !(dyn_.d.is_finite()
        && dyn_.b.is_finite()
        && dyn_.cdq.iter().chain(&dyn_.gvec).all(|v| v.is_finite()))
    {
        return Err(Error::NonFiniteDynamics);
    }
    if !dyn_.d.is_symmetric(1e-10) || !linalg::is_positive_definite(&dyn_.d) {
        return Err(Error::SingularInertia);
    }
    Ok(dyn_)
}

/// `q̈ = D⁻¹(Bu − Cq̇ − G)`.
pub fn accel(plant: &PlantModel, x: &MechState, u: &[f64]) -> Result<Vec<f64>> {
    check_dim("input", plant.m(), u.len())?;
    let d = eval_dynamics(plant, x)?;
    let bu = d.b.mul_vec(u);
    let rhs: Vec<f64> = (0..plant.n()).map(|i| bu[i] - d.cdq[i] - d.gvec[i]).collect();
    linalg::solve(&d.d, &rhs).ok_or(Error::SingularInertia)
}

struct PhaseTerms {
    eval: OutputEval,
    yd1: Vec<f64>,
    yd2: Vec<f64>,
}

fn phase_terms(outmap: &OutputMap, x: &MechState) -> Result<PhaseTerms> {
    check_dim("state", outmap.n(), x.dim())?;
    let theta = outmap.theta(&x.q);
    let thetadot = linalg::dot(&outmap.theta_coeffs, &x.dq);
    outmap.check_phase(theta)?;
    let span = outmap.span();
    let (yd, yd1, yd2) = outmap.yd.eval_extended(outmap.phase(theta));
    let h0q = outmap.h0.mul_vec(&x.q);
    let h0dq = outmap.h0.mul_vec(&x.dq);
    let y = h0q.iter().zip(&yd).map(|(a, b)| a - b).collect();
    let ydot = h0dq.iter().zip(&yd1).map(|(a, b)| a - b * thetadot / span).collect();
    Ok(PhaseTerms { eval: OutputEval { y, ydot, theta, thetadot }, yd1, yd2 })
}

pub fn eval_outputs(outmap: &OutputMap, x: &MechState) -> Result<OutputEval> {
    phase_terms(outmap, x).map(|p| p.eval)
}

pub fn transverse_state(outmap: &OutputMap, x: &MechState) -> Result<TransverseState> {
    let out = eval_outputs(outmap, x)?;
    let mut eta = out.y;
    eta.extend_from_slice(&out.ydot);
    Ok(TransverseState { eta })
}

/// Output Jacobian `J = H₀ − y_d′(s)cᵀ/Δ`.
pub fn output_jacobian(outmap: &OutputMap, x: &MechState) -> Result<Matrix> {
    let p = phase_terms(outmap, x)?;
    Ok(jacobian_from(outmap, &p.yd1))
}

fn jacobian_from(outmap: &OutputMap, yd1: &[f64]) -> Matrix {
    let span = outmap.span();
    Matrix::from_fn(outmap.m(), outmap.n(), |i, j| {
        outmap.h0[(i, j)] - yd1[i] * outmap.theta_coeffs[j] / span
    })
}

pub fn io_linearize(plant: &PlantModel, outmap: &OutputMap, x: &MechState) -> Result<IOLinearization> {
    check_dim("outputs", plant.m(), outmap.m())?;
    let dyn_ = eval_dynamics(plant, x)?;
    let p = phase_terms(outmap, x)?;
    let j = jacobian_from(outmap, &p.yd1);
    let lu = Lu::new(&dyn_.d).ok_or(Error::SingularInertia)?;
    let n = plant.n();
    let m = plant.m();

    let mut dinv_b = Matrix::zeros(n, m);
    let mut col = alloc::vec![0.0; n];
    for k in 0..m {
        for i in 0..n {
            col[i] = dyn_.b[(i, k)];
        }
        let sol = lu.solve(&col);
        for i in 0..n {
            dinv_b[(i, k)] = sol[i];
        }
    }
    let drift: Vec<f64> = (0..n).map(|i| -dyn_.cdq[i] - dyn_.gvec[i]).collect();
    let dinv_drift = lu.solve(&drift);

    let adec = j.matmul(&dinv_b);
    let rate = p.eval.thetadot / outmap.span();
    let jd = j.mul_vec(&dinv_drift);
    let lf2y: Vec<f64> = jd.iter().zip(&p.yd2).map(|(a, b)| a - b * rate * rate).collect();

    let cond = linalg::condition_number(&adec);
    if !(cond < MAX_DECOUPLING_COND) {
        return Err(Error::SingularDecoupling { cond });
    }
    let alu = Lu::new(&adec).ok_or(Error::SingularDecoupling { cond })?;
    let adec_inv = alu.inverse();
    let ustar = alu.solve(&lf2y).into_iter().map(|v| -v).collect();
    Ok(IOLinearization { adec, adec_inv, lf2y, ustar, cond })
}

/// `u = u* + Adec⁻¹μ`.
pub fn apply_precontrol(io: &IOLinearization, mu: &[f64]) -> Result<Vec<f64>> {
    check_dim("mu", io.ustar.len(), mu.len())?;
    let v = io.adec_inv.mul_vec(mu);
    Ok(io.ustar.iter().zip(&v).map(|(a, b)| a + b).collect())
}
