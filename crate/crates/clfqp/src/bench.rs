//! `bench-qp`: wall-clock timing of the interior-point solver.
//!
//! Size labels are `hardM` / `softM` for the controller's own QPs with `M`
//! torque channels, or `NxC` for random feasible problems with `N` variables
//! and `C` constraints.

use std::time::Instant;

use clfqp_core::clfqp::{build_hard_qp, build_soft_qp, Bounds};
use clfqp_core::linalg::{self, Matrix};
use clfqp_core::mechsys::IOLinearization;
use clfqp_core::qp::{QpProblem, QpSolution, QpSolver, QpStatus, DEFAULT_MAX_ITER, DEFAULT_TOL, MAX_CONSTRAINTS, MAX_VARS};
use clfqp_core::resclf::PsiPair;
use clfqp_core::sim::percentile_of;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_SIZES: &str = "hard2,soft2,5x5";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchSize {
    Hard(usize),
    Soft(usize),
    Random { nv: usize, nc: usize },
}

impl BenchSize {
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || CliError::config("sizes", format!("\"{s}\" is not hardM, softM or NxC"));
        let s = s.trim();
        let size = if let Some(m) = s.strip_prefix("hard") {
            BenchSize::Hard(m.parse().map_err(|_| bad())?)
        } else if let Some(m) = s.strip_prefix("soft") {
            BenchSize::Soft(m.parse().map_err(|_| bad())?)
        } else {
            let (a, b) = s.split_once('x').ok_or_else(bad)?;
            BenchSize::Random { nv: a.parse().map_err(|_| bad())?, nc: b.parse().map_err(|_| bad())? }
        };
        let (nv, nc) = size.dims();
        if nv == 0 || nv > MAX_VARS || nc > MAX_CONSTRAINTS {
            return Err(CliError::config(
                "sizes",
                format!("\"{s}\" is {nv}x{nc}; the solver handles up to {MAX_VARS}x{MAX_CONSTRAINTS}"),
            ));
        }
        Ok(size)
    }

    pub fn dims(self) -> (usize, usize) {
        match self {
            BenchSize::Hard(m) => (m + 1, 2 * m + 1),
            BenchSize::Soft(m) => (3 * m + 1, 4 * m + 1),
            BenchSize::Random { nv, nc } => (nv, nc),
        }
    }

    pub fn label(self) -> String {
        match self {
            BenchSize::Hard(m) => format!("hard{m}"),
            BenchSize::Soft(m) => format!("soft{m}"),
            BenchSize::Random { nv, nc } => format!("{nv}x{nc}"),
        }
    }
}

pub fn parse_sizes(list: &str) -> Result<Vec<BenchSize>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(BenchSize::parse).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub size: String,
    pub nv: usize,
    pub nc: usize,
    pub samples: usize,
    pub optimal: usize,
    pub median_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
}

/// Controller-shaped data: a well-conditioned decoupling matrix, `u*` well
/// inside the bounds and a CLF constraint that is active about half the time.
fn controller_parts(rng: &mut ChaCha8Rng, m: usize) -> (PsiPair, IOLinearization, Bounds) {
    let adec = Matrix::from_fn(m, m, |i, j| if i == j { rng.random_range(0.5..2.0) } else { rng.random_range(-0.2..0.2) });
    let adec_inv = linalg::inverse(&adec).expect("diagonally dominant");
    let ustar: Vec<f64> = (0..m).map(|_| rng.random_range(-50.0..50.0)).collect();
    let io = IOLinearization { cond: linalg::condition_number(&adec), adec, adec_inv, lf2y: vec![0.0; m], ustar };
    let psi = PsiPair {
        psi0: rng.random_range(-100.0..100.0),
        psi1: (0..m).map(|_| rng.random_range(-20.0..20.0)).collect(),
    };
    let bounds = Bounds { umin: vec![-100.0; m], umax: vec![100.0; m] };
    (psi, io, bounds)
}

fn random_qp(rng: &mut ChaCha8Rng, nv: usize, nc: usize) -> QpProblem {
    let a = Matrix::from_fn(nv, nv, |_, _| rng.random_range(-1.0..1.0));
    let mut hess = a.matmul(&a.transpose());
    for i in 0..nv {
        hess[(i, i)] += 0.1;
    }
    hess.symmetrize();
    let f = (0..nv).map(|_| rng.random_range(-5.0..5.0)).collect();
    let g = Matrix::from_fn(nc, nv, |_, _| rng.random_range(-1.0..1.0));
    let x0: Vec<f64> = (0..nv).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h = g.mul_vec(&x0).iter().map(|v| v + rng.random_range(0.01..1.0)).collect();
    QpProblem::new(hess, f, g, h).expect("valid random QP")
}

pub fn problems(size: BenchSize, count: usize, seed: u64) -> Vec<QpProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| match size {
            BenchSize::Hard(m) => {
                let (psi, io, b) = controller_parts(&mut rng, m);
                build_hard_qp(&psi, &io, &b, 1000.0).expect("valid hard QP")
            }
            BenchSize::Soft(m) => {
                let (psi, io, b) = controller_parts(&mut rng, m);
                build_soft_qp(&psi, &io, &b, 1000.0, 10.0).expect("valid soft QP")
            }
            BenchSize::Random { nv, nc } => random_qp(&mut rng, nv, nc),
        })
        .collect()
}

/// Times `samples` solves of distinct problems with one reused workspace.
pub fn bench(size: BenchSize, samples: usize, seed: u64) -> BenchResult {
    let probs = problems(size, samples, seed);
    let mut solver = QpSolver::new();
    let mut sol = QpSolution::empty();
    // warm the workspace so its one-time growth is not timed
    if let Some(p) = probs.first() {
        solver.solve_into(p, DEFAULT_MAX_ITER, DEFAULT_TOL, &mut sol);
    }
    let mut times = Vec::with_capacity(samples);
    let mut optimal = 0;
    for p in &probs {
        let t0 = Instant::now();
        solver.solve_into(p, DEFAULT_MAX_ITER, DEFAULT_TOL, &mut sol);
        times.push(t0.elapsed().as_secs_f64() * 1e6);
        optimal += usize::from(sol.status == QpStatus::Optimal);
    }
    let (nv, nc) = size.dims();
    BenchResult {
        size: size.label(),
        nv,
        nc,
        samples,
        optimal,
        median_us: percentile_of(&times, 0.5),
        p99_us: percentile_of(&times, 0.99),
        max_us: times.iter().copied().fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_labels() {
        assert_eq!(parse_sizes("hard2, soft2,5x5").unwrap(), vec![
            BenchSize::Hard(2),
            BenchSize::Soft(2),
            BenchSize::Random { nv: 5, nc: 5 }
        ]);
        assert_eq!(BenchSize::Hard(2).dims(), (3, 5));
        assert_eq!(BenchSize::Soft(2).dims(), (7, 9));
        let e = BenchSize::parse("11x3").unwrap_err();
        assert!(e.to_string().starts_with("sizes:"), "{e}");
        assert!(BenchSize::parse("hardx").is_err());
    }

    #[test]
    fn generated_problems_solve() {
        for size in parse_sizes(DEFAULT_SIZES).unwrap() {
            let r = bench(size, 50, 1);
            assert_eq!(r.optimal, 50, "{size:?}");
        }
    }
}
