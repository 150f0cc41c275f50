use clfqp_core::qp::{QpSolution, QpSolver};
use clfqp_testkit::{random_feasible_qp, CountingAlloc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc::new();

#[test]
fn repeated_solves_do_not_allocate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let problems: Vec<_> = (0..50).map(|_| random_feasible_qp(&mut rng, 5, 11)).collect();
    let mut solver = QpSolver::new();
    let mut sol = QpSolution::empty();
    solver.solve_into(&problems[0], 20, 1e-7, &mut sol);
    let before = ALLOC.count();
    for p in &problems {
        solver.solve_into(p, 20, 1e-7, &mut sol);
    }
    assert_eq!(ALLOC.count(), before, "solver allocated after warm-up");
}
