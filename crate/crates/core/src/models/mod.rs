//! Concrete plants: a linear chain that realizes the transverse double
//! integrator exactly, and a three-link biped with impacts.

pub mod biped;
pub mod gait;

use alloc::vec;
use alloc::vec::Vec;

pub use biped::{BipedParams, ImpactResult};
pub use gait::{find_periodic_gait, poincare_map, GaitDesign, GaitTemplate};

use crate::bezier::Bezier;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mechsys::{DynamicsEval, MechState, OutputMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlantKind {
    LinearChain,
    ThreeLinkBiped,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PlantModel {
    /// `n = 2m` unit masses; the first `m` are actuated, the rest drift freely.
    LinearChain { m: usize },
    ThreeLinkBiped(BipedParams),
}

impl PlantModel {
    pub fn kind(&self) -> PlantKind {
        match self {
            PlantModel::LinearChain { .. } => PlantKind::LinearChain,
            PlantModel::ThreeLinkBiped(_) => PlantKind::ThreeLinkBiped,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            PlantModel::LinearChain { m } => 2 * m,
            PlantModel::ThreeLinkBiped(_) => biped::N,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            PlantModel::LinearChain { m } => *m,
            PlantModel::ThreeLinkBiped(_) => biped::M,
        }
    }

    /// Raw dynamics terms; see [`crate::mechsys::eval_dynamics`] for the checked version.
    pub fn dynamics(&self, x: &MechState) -> DynamicsEval {
        match self {
            PlantModel::LinearChain { m } => {
                let n = 2 * m;
                let mut b = Matrix::zeros(n, *m);
                for i in 0..*m {
                    b[(i, i)] = 1.0;
                }
                DynamicsEval { d: Matrix::identity(n), cdq: vec![0.0; n], gvec: vec![0.0; n], b }
            }
            PlantModel::ThreeLinkBiped(p) => p.dynamics(x),
        }
    }

    /// Kinetic plus potential energy.
    pub fn energy(&self, x: &MechState) -> f64 {
        match self {
            PlantModel::LinearChain { .. } => 0.5 * x.dq.iter().map(|v| v * v).sum::<f64>(),
            PlantModel::ThreeLinkBiped(p) => p.total_energy(x),
        }
    }
}

/// Guard evaluation: swing-foot height, whether the foot has made enough forward
/// progress for a touchdown to count, and the height rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuardEval {
    pub height: f64,
    pub armed: bool,
    pub rate: f64,
}

/// A plant plus its impact surface and reset map.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridModel {
    pub plant: PlantModel,
}

impl HybridModel {
    /// `None` for plants without impacts.
    pub fn guard(&self, x: &MechState) -> Option<GuardEval> {
        match &self.plant {
            PlantModel::LinearChain { .. } => None,
            PlantModel::ThreeLinkBiped(p) => {
                let (sx, sz) = p.swing_foot(&x.q);
                Some(GuardEval { height: sz, armed: sx >= p.min_step_length, rate: p.swing_height_rate(x) })
            }
        }
    }

    pub fn reset(&self, x: &MechState) -> Result<MechState> {
        match &self.plant {
            PlantModel::LinearChain { .. } => Ok(x.clone()),
            PlantModel::ThreeLinkBiped(p) => p.impact(x).map(|r| r.post),
        }
    }

    pub fn torso_pitch(&self, x: &MechState) -> Option<f64> {
        match &self.plant {
            PlantModel::LinearChain { .. } => None,
            PlantModel::ThreeLinkBiped(_) => Some(x.q[2]),
        }
    }

    pub fn has_impacts(&self) -> bool {
        matches!(self.plant, PlantModel::ThreeLinkBiped(_))
    }
}

/// Linear chain with position outputs on the actuated block and `y_d ≡ 0`,
/// so that `η̇ = Fη + Gμ` holds exactly under the pre-control law.
pub fn make_linear_chain(m: usize) -> Result<(PlantModel, OutputMap)> {
    if m == 0 {
        return Err(Error::InvalidParams("linear chain needs m >= 1".into()));
    }
    let n = 2 * m;
    let mut h0 = Matrix::zeros(m, n);
    for i in 0..m {
        h0[(i, i)] = 1.0;
    }
    let outmap = OutputMap::new(h0, vec![0.0; n], Bezier::constant(&vec![0.0; m]), (-1.0, 1.0))?;
    Ok((PlantModel::LinearChain { m }, outmap))
}

pub fn make_three_link_biped(params: BipedParams) -> Result<HybridModel> {
    params.validate()?;
    Ok(HybridModel { plant: PlantModel::ThreeLinkBiped(params) })
}

/// Output map used by the biped: torso pitch and the leg-angle sum
/// `q₀ + q₁` (zero exactly when both feet touch flat ground), phased by the
/// stance-leg angle.
pub fn biped_output_basis() -> (Matrix, Vec<f64>) {
    (Matrix::from_rows(&[&[0.0, 0.0, 1.0], &[1.0, 1.0, 0.0]]), vec![1.0, 0.0, 0.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechsys::{eval_dynamics, io_linearize};

    #[test]
    fn linear_chain_decoupling_is_identity_everywhere() {
        let (plant, outmap) = make_linear_chain(2).unwrap();
        for k in 0..5 {
            let f = k as f64;
            let x = MechState::new(vec![f, -f, 0.5 * f, 1.0], vec![0.1 * f, 2.0, -f, 0.0]).unwrap();
            let io = io_linearize(&plant, &outmap, &x).unwrap();
            assert!(io.adec.sub(&Matrix::identity(2)).max_abs() < 1e-15);
            assert!(io.ustar.iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn biped_inertia_pd_over_random_states() {
        use rand::{Rng, SeedableRng};
        let plant = PlantModel::ThreeLinkBiped(BipedParams::default());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-1.2..1.2)).collect();
            let dq: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let x = MechState::new(q, dq).unwrap();
            let d = eval_dynamics(&plant, &x).unwrap();
            assert!(d.d.sub(&d.d.transpose()).norm_inf() < 1e-12);
        }
    }

    #[test]
    fn guard_arms_only_with_forward_progress() {
        let hm = make_three_link_biped(BipedParams::default()).unwrap();
        // swing foot behind at the start of a step
        let start = MechState::new(vec![-0.2, 0.2, 0.2], vec![1.0, 0.5, 0.0]).unwrap();
        let g = hm.guard(&start).unwrap();
        assert!(!g.armed && g.height.abs() < 1e-15);
        // swing foot ahead at touchdown
        let end = MechState::new(vec![0.2, -0.2, 0.2], vec![1.0, 0.5, 0.0]).unwrap();
        assert!(hm.guard(&end).unwrap().armed);
        let (plant, _) = make_linear_chain(1).unwrap();
        assert!(HybridModel { plant }.guard(&MechState::zeros(2)).is_none());
    }
}
