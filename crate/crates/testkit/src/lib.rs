//! Test-only helpers: an active-set enumeration QP oracle and dense
//! eigen/solve routines from nalgebra, kept separate from the code under test.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use clfqp_core::linalg::Matrix;
use clfqp_core::models::gait::{default_clf, find_periodic_gait, GaitDesign, GaitTemplate};
use clfqp_core::models::{make_three_link_biped, BipedParams, HybridModel};
use clfqp_core::qp::QpProblem;
use clfqp_core::resclf::Resclf;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = to_na(m).symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Largest real part of the spectrum of a general square matrix.
pub fn max_real_eigenvalue(m: &Matrix) -> f64 {
    to_na(m).complex_eigenvalues().iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max)
}

pub struct OracleSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub active: Vec<usize>,
}

/// Exhaustive active-set search: every subset of at most `nv` constraints is
/// treated as equalities, the KKT system is solved, and the best point that is
/// primal feasible with nonnegative multipliers is kept. Requires `H` positive
/// definite so every KKT system with independent rows is nonsingular.
pub fn active_set_oracle(p: &QpProblem, feas_tol: f64) -> Option<OracleSolution> {
    let nv = p.nv();
    let nc = p.nc();
    assert!(nc <= 16, "oracle enumerates 2^nc subsets");
    let h = to_na(&p.hess);
    let g = to_na(&p.g);
    let mut best: Option<OracleSolution> = None;
    for mask in 0u32..(1u32 << nc) {
        let active: Vec<usize> = (0..nc).filter(|i| mask & (1 << i) != 0).collect();
        if active.len() > nv {
            continue;
        }
        let k = nv + active.len();
        let mut kkt = DMatrix::<f64>::zeros(k, k);
        let mut rhs = DVector::<f64>::zeros(k);
        kkt.view_mut((0, 0), (nv, nv)).copy_from(&h);
        for (r, &i) in active.iter().enumerate() {
            for j in 0..nv {
                kkt[(nv + r, j)] = g[(i, j)];
                kkt[(j, nv + r)] = g[(i, j)];
            }
            rhs[nv + r] = p.h[i];
        }
        for j in 0..nv {
            rhs[j] = -p.f[j];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        if sol.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let x: Vec<f64> = sol.iter().take(nv).copied().collect();
        if (nv..k).any(|r| sol[r] < -1e-9) {
            continue;
        }
        if p.max_violation(&x) > feas_tol {
            continue;
        }
        let obj = p.objective(&x);
        if best.as_ref().is_none_or(|b| obj < b.objective) {
            best = Some(OracleSolution { x, objective: obj, active });
        }
    }
    best
}

/// A random strictly convex QP with a known strictly feasible point.
pub fn random_feasible_qp<R: Rng>(rng: &mut R, nv: usize, nc: usize) -> QpProblem {
    let a = Matrix::from_fn(nv, nv, |_, _| rng.random_range(-1.0..1.0));
    let mut hess = a.matmul(&a.transpose());
    for i in 0..nv {
        hess[(i, i)] += 0.1;
    }
    hess.symmetrize();
    let f: Vec<f64> = (0..nv).map(|_| rng.random_range(-5.0..5.0)).collect();
    let g = Matrix::from_fn(nc, nv, |_, _| rng.random_range(-1.0..1.0));
    let x0: Vec<f64> = (0..nv).map(|_| rng.random_range(-1.0..1.0)).collect();
    let gx = g.mul_vec(&x0);
    let h: Vec<f64> = gx.iter().map(|v| v + rng.random_range(0.01..1.0)).collect();
    QpProblem::new(hess, f, g, h).expect("generator builds valid problems")
}

/// Global allocator wrapper that counts allocation calls.
pub struct CountingAlloc {
    count: AtomicUsize,
}

impl CountingAlloc {
    pub const fn new() -> Self {
        Self { count: AtomicUsize::new(0) }
    }

    pub fn count(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }
}

impl Default for CountingAlloc {
    fn default() -> Self {
        Self::new()
    }
}

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        self.count.fetch_add(1, Ordering::SeqCst);
        System.alloc(layout)
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout)
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        self.count.fetch_add(1, Ordering::SeqCst);
        System.realloc(ptr, layout, new_size)
    }
}

pub struct DefaultWalker {
    pub model: HybridModel,
    pub gait: GaitDesign,
    pub clf: Resclf,
}

/// The default biped with its designed gait, built once per test binary.
pub fn default_walker() -> &'static DefaultWalker {
    static CELL: OnceLock<DefaultWalker> = OnceLock::new();
    CELL.get_or_init(|| {
        let model = make_three_link_biped(BipedParams::default()).expect("default biped");
        let clf = default_clf().expect("default CLF");
        let gait = find_periodic_gait(&model, &GaitTemplate::default(), &clf, None).expect("default gait");
        DefaultWalker { model, gait, clf }
    })
}
