//! Rapidly exponentially stabilizing control Lyapunov functions built from a
//! Lyapunov equation on the transverse double integrator.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Matrix};

/// Real parts at or above this are treated as not strictly stable.
pub const HURWITZ_MARGIN: f64 = -1e-12;
/// Relative residual accepted from the Lyapunov solve.
pub const LYAPUNOV_TOL: f64 = 1e-10;

/// The Lyapunov certificate and its ε-scaled form.
#[derive(Clone, Debug, PartialEq)]
pub struct Resclf {
    pub p: Matrix,
    pub peps: Matrix,
    pub eps: f64,
    /// `λ_min(P)`.
    pub c1: f64,
    /// `λ_max(P)`.
    pub c2: f64,
    /// `λ_min(Q)/λ_max(P)`.
    pub c3: f64,
    pub q: Matrix,
    pub a: Matrix,
}

/// `ψ₀ = ηᵀ(FᵀP_ε + P_εF)η + (c₃/ε)V` and `ψ₁ = 2GᵀP_εη`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiPair {
    pub psi0: f64,
    pub psi1: Vec<f64>,
}

/// Solves `AᵀP + PA = −Q` through the Kronecker-structured linear system.
pub fn solve_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    check_dim("Lyapunov A (square)", n, a.cols())?;
    check_dim("Lyapunov Q", n, q.rows())?;
    check_dim("Lyapunov Q", n, q.cols())?;
    if !q.is_symmetric(1e-12) || !linalg::is_positive_definite(q) {
        return Err(Error::InvalidGains("Q must be symmetric positive definite"));
    }
    let ev = linalg::eigenvalues(a).ok_or(Error::NotHurwitz { max_real: f64::NAN })?;
    let max_real = ev.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    if !(max_real < HURWITZ_MARGIN) {
        return Err(Error::NotHurwitz { max_real });
    }

    // Unknown P[i][j] sits at index i*n + j.
    let nn = n * n;
    let mut k = Matrix::zeros(nn, nn);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for l in 0..n {
                // (AᵀP)_ij = Σ_l A_li P_lj
                k[(row, l * n + j)] += a[(l, i)];
                // (PA)_ij = Σ_l P_il A_lj
                k[(row, i * n + l)] += a[(l, j)];
            }
        }
    }
    let rhs: Vec<f64> = q.as_slice().iter().map(|v| -v).collect();
    let sol = linalg::solve(&k, &rhs).ok_or(Error::SolveFailed { residual: f64::INFINITY })?;
    let mut p = Matrix::from_row_slice(n, n, &sol);
    p.symmetrize();

    let residual = lyapunov_residual(a, &p, q);
    if !(residual < LYAPUNOV_TOL * q.norm_inf()) {
        return Err(Error::SolveFailed { residual });
    }
    if !linalg::is_positive_definite(&p) {
        return Err(Error::SolveFailed { residual });
    }
    Ok(p)
}

/// `‖AᵀP + PA + Q‖∞`.
pub fn lyapunov_residual(a: &Matrix, p: &Matrix, q: &Matrix) -> f64 {
    a.transpose().matmul(p).add(&p.matmul(a)).add(q).norm_inf()
}

/// `A = [[0, I], [−K_P, −K_D]]`.
pub fn closed_loop_matrix(kp: &[f64], kd: &[f64]) -> Matrix {
    let m = kp.len();
    let mut a = Matrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        a[(i, m + i)] = 1.0;
        a[(m + i, i)] = -kp[i];
        a[(m + i, m + i)] = -kd[i];
    }
    a
}

/// `diag(I/ε, I)·P·diag(I/ε, I)`.
pub fn scale_by_epsilon(p: &Matrix, eps: f64) -> Matrix {
    let m = p.rows() / 2;
    let s = |i: usize| if i < m { 1.0 / eps } else { 1.0 };
    Matrix::from_fn(p.rows(), p.cols(), |i, j| s(i) * p[(i, j)] * s(j))
}

/// `kp`, `kd` are the diagonals of the positive gain matrices.
pub fn build_resclf(kp: &[f64], kd: &[f64], q: &Matrix, eps: f64) -> Result<Resclf> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::BadEpsilon(eps));
    }
    check_dim("K_D", kp.len(), kd.len())?;
    if kp.is_empty() || kp.iter().chain(kd).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidGains("K_P and K_D must have positive diagonal entries"));
    }
    check_dim("Q", 2 * kp.len(), q.rows())?;
    let a = closed_loop_matrix(kp, kd);
    let p = solve_lyapunov(&a, q)?;
    let evp = linalg::symmetric_eigenvalues(&p);
    let evq = linalg::symmetric_eigenvalues(q);
    let c1 = evp[0];
    let c2 = *evp.last().unwrap();
    let c3 = evq[0] / c2;
    let peps = scale_by_epsilon(&p, eps);
    Ok(Resclf { p, peps, eps, c1, c2, c3, q: q.clone(), a })
}

impl Resclf {
    /// Number of outputs.
    pub fn m(&self) -> usize {
        self.p.rows() / 2
    }

    /// Enforced decay rate `c₃/ε`.
    pub fn decay_rate(&self) -> f64 {
        self.c3 / self.eps
    }
}

/// `V_ε(η) = ηᵀP_εη`.
pub fn eval_v(clf: &Resclf, eta: &[f64]) -> f64 {
    clf.peps.quad_form(eta)
}

/// `∇V_ε·(Fη)`, i.e. `ηᵀ(FᵀP_ε + P_εF)η`.
pub fn lf_v(clf: &Resclf, eta: &[f64]) -> f64 {
    let m = clf.m();
    // Fη = [η₂; 0]
    let mut f_eta = vec![0.0; 2 * m];
    f_eta[..m].copy_from_slice(&eta[m..]);
    2.0 * linalg::dot(&clf.peps.mul_vec(eta), &f_eta)
}

pub fn eval_psi(clf: &Resclf, eta: &[f64]) -> PsiPair {
    let m = clf.m();
    let pe = clf.peps.mul_vec(eta);
    let psi1 = pe[m..].iter().map(|v| 2.0 * v).collect();
    let psi0 = lf_v(clf, eta) + clf.decay_rate() * linalg::dot(eta, &pe);
    PsiPair { psi0, psi1 }
}

/// Guaranteed bound on `‖η(t)‖` for any controller meeting the CLF decrease condition.
pub fn convergence_envelope(clf: &Resclf, t: f64, eta0_norm: f64) -> f64 {
    (1.0 / clf.eps) * libm::sqrt(clf.c2 / clf.c1) * libm::exp(-clf.c3 * t / (2.0 * clf.eps)) * eta0_norm
}
