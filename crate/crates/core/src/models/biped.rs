//! Planar three-link biped: two identical legs and a torso joined at the hip,
//! point feet, stance foot pinned. Coordinates are absolute angles from the
//! vertical, positive when leaning forward:
//!
//! * `q[0]`: stance leg (foot → hip),
//! * `q[1]`: swing leg (foot → hip),
//! * `q[2]`: torso (hip → torso mass).
//!
//! Inputs are the two hip torques acting between the torso and each leg, so the
//! model is underactuated by one degree of freedom.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::mechsys::{DynamicsEval, MechState};

pub const N: usize = 3;
pub const M: usize = 2;

/// Physical parameters. Leg masses sit at mid-leg, the torso mass at the end
/// of the torso, the hip mass at the hip.
#[derive(Clone, Debug, PartialEq)]
pub struct BipedParams {
    /// Leg length (m).
    pub leg_length: f64,
    /// Mass of each leg (kg).
    pub leg_mass: f64,
    /// Point mass at the hip (kg).
    pub hip_mass: f64,
    /// Hip-to-torso-mass distance (m).
    pub torso_length: f64,
    /// Torso mass (kg).
    pub torso_mass: f64,
    /// Rotational inertia of each leg about its center of mass (kg·m²).
    pub leg_inertia: f64,
    /// Rotational inertia of the torso about its center of mass (kg·m²).
    pub torso_inertia: f64,
    /// Gravitational acceleration (m/s²).
    pub gravity: f64,
    /// Horizontal lead of the swing foot required before touchdown counts (m).
    pub min_step_length: f64,
}

impl Default for BipedParams {
    fn default() -> Self {
        Self {
            leg_length: 1.0,
            leg_mass: 5.0,
            hip_mass: 15.0,
            torso_length: 0.5,
            torso_mass: 10.0,
            leg_inertia: 0.1,
            torso_inertia: 0.1,
            gravity: 9.81,
            min_step_length: 0.1,
        }
    }
}

impl BipedParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("leg_length", self.leg_length),
            ("leg_mass", self.leg_mass),
            ("hip_mass", self.hip_mass),
            ("torso_length", self.torso_length),
            ("torso_mass", self.torso_mass),
            ("leg_inertia", self.leg_inertia),
            ("torso_inertia", self.torso_inertia),
            ("gravity", self.gravity),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.min_step_length >= 0.0) || self.min_step_length >= 2.0 * self.leg_length {
            return Err(Error::InvalidParams(format!(
                "min_step_length must lie in [0, 2*leg_length), got {}",
                self.min_step_length
            )));
        }
        Ok(())
    }

    fn masses(&self) -> [f64; 4] {
        [self.leg_mass, self.hip_mass, self.leg_mass, self.torso_mass]
    }

    /// Lever arms: point mass `i` sits at `Σ_k lever[i][k]·(sin q_k, cos q_k)`
    /// relative to the stance foot.
    fn levers(&self) -> [[f64; N]; 4] {
        let r = self.leg_length;
        let l = self.torso_length;
        [[0.5 * r, 0.0, 0.0], [r, 0.0, 0.0], [r, -0.5 * r, 0.0], [r, 0.0, l]]
    }

    fn link_inertias(&self) -> [f64; N] {
        [self.leg_inertia, self.leg_inertia, self.torso_inertia]
    }

    /// `a[k][j] = Σᵢ mᵢ lever[i][k] lever[i][j]`, so that `D_kj = a_kj cos(q_k − q_j) + I_k δ_kj`.
    fn coupling(&self) -> [[f64; N]; N] {
        let mut a = [[0.0; N]; N];
        let lv = self.levers();
        for (mi, li) in self.masses().iter().zip(lv.iter()) {
            for k in 0..N {
                for j in 0..N {
                    a[k][j] += mi * li[k] * li[j];
                }
            }
        }
        a
    }

    pub fn inertia(&self, q: &[f64]) -> Matrix {
        let a = self.coupling();
        let inert = self.link_inertias();
        Matrix::from_fn(N, N, |k, j| {
            a[k][j] * libm::cos(q[k] - q[j]) + if k == j { inert[k] } else { 0.0 }
        })
    }

    /// `∂D/∂q_l` for each `l`.
    pub fn inertia_partials(&self, q: &[f64]) -> [Matrix; N] {
        let a = self.coupling();
        let mut out = [Matrix::zeros(N, N), Matrix::zeros(N, N), Matrix::zeros(N, N)];
        for k in 0..N {
            for j in 0..N {
                if k == j {
                    continue;
                }
                let s = -a[k][j] * libm::sin(q[k] - q[j]);
                out[k][(k, j)] += s;
                out[j][(k, j)] -= s;
            }
        }
        out
    }

    /// Coriolis matrix from the Christoffel symbols of `D`.
    pub fn coriolis(&self, q: &[f64], dq: &[f64]) -> Matrix {
        let dd = self.inertia_partials(q);
        Matrix::from_fn(N, N, |k, j| {
            (0..N)
                .map(|i| 0.5 * (dd[i][(k, j)] + dd[j][(k, i)] - dd[k][(i, j)]) * dq[i])
                .sum()
        })
    }

    pub fn gravity_vector(&self, q: &[f64]) -> Vec<f64> {
        let lv = self.levers();
        let ms = self.masses();
        (0..N)
            .map(|k| {
                let w: f64 = ms.iter().zip(lv.iter()).map(|(m, l)| m * l[k]).sum();
                -self.gravity * w * libm::sin(q[k])
            })
            .collect()
    }

    pub fn input_matrix(&self) -> Matrix {
        Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, -1.0]])
    }

    pub fn dynamics(&self, x: &MechState) -> DynamicsEval {
        let c = self.coriolis(&x.q, &x.dq);
        DynamicsEval {
            d: self.inertia(&x.q),
            cdq: c.mul_vec(&x.dq),
            gvec: self.gravity_vector(&x.q),
            b: self.input_matrix(),
        }
    }

    pub fn kinetic_energy(&self, x: &MechState) -> f64 {
        0.5 * self.inertia(&x.q).quad_form(&x.dq)
    }

    pub fn potential_energy(&self, q: &[f64]) -> f64 {
        let lv = self.levers();
        self.masses()
            .iter()
            .zip(lv.iter())
            .map(|(m, l)| m * self.gravity * (0..N).map(|k| l[k] * libm::cos(q[k])).sum::<f64>())
            .sum()
    }

    pub fn total_energy(&self, x: &MechState) -> f64 {
        self.kinetic_energy(x) + self.potential_energy(&x.q)
    }

    /// Swing-foot position relative to the stance foot.
    pub fn swing_foot(&self, q: &[f64]) -> (f64, f64) {
        let r = self.leg_length;
        (r * (libm::sin(q[0]) - libm::sin(q[1])), r * (libm::cos(q[0]) - libm::cos(q[1])))
    }

    /// Time derivative of the swing-foot height.
    pub fn swing_height_rate(&self, x: &MechState) -> f64 {
        let r = self.leg_length;
        r * (-libm::sin(x.q[0]) * x.dq[0] + libm::sin(x.q[1]) * x.dq[1])
    }

    fn mass_positions(&self, q: &[f64], foot: (f64, f64)) -> [(f64, f64); 4] {
        let lv = self.levers();
        let mut out = [(0.0, 0.0); 4];
        for (o, l) in out.iter_mut().zip(lv.iter()) {
            let mut p = foot;
            for k in 0..N {
                p.0 += l[k] * libm::sin(q[k]);
                p.1 += l[k] * libm::cos(q[k]);
            }
            *o = p;
        }
        out
    }

    /// Jacobian of mass `i` position with respect to the extended coordinates
    /// `(q, x_foot, z_foot)`.
    fn mass_jacobian(&self, i: usize, q: &[f64]) -> [[f64; 5]; 2] {
        let l = self.levers()[i];
        let mut j = [[0.0; 5]; 2];
        for k in 0..N {
            j[0][k] = l[k] * libm::cos(q[k]);
            j[1][k] = -l[k] * libm::sin(q[k]);
        }
        j[0][3] = 1.0;
        j[1][4] = 1.0;
        j
    }

    /// Inertia in extended coordinates `(q, x_foot, z_foot)` with a free stance foot.
    pub fn extended_inertia(&self, q: &[f64]) -> Matrix {
        let mut de = Matrix::zeros(5, 5);
        for (i, m) in self.masses().iter().enumerate() {
            let j = self.mass_jacobian(i, q);
            for a in 0..5 {
                for b in 0..5 {
                    de[(a, b)] += m * (j[0][a] * j[0][b] + j[1][a] * j[1][b]);
                }
            }
        }
        for (k, inert) in self.link_inertias().iter().enumerate() {
            de[(k, k)] += inert;
        }
        de
    }

    fn swing_foot_jacobian(&self, q: &[f64]) -> [[f64; 5]; 2] {
        let r = self.leg_length;
        [
            [r * libm::cos(q[0]), -r * libm::cos(q[1]), 0.0, 1.0, 0.0],
            [-r * libm::sin(q[0]), r * libm::sin(q[1]), 0.0, 0.0, 1.0],
        ]
    }

    /// Angular momentum (forward rotation positive) about `point`, with the
    /// stance foot at `foot` moving with `foot_vel`.
    pub fn angular_momentum(&self, q: &[f64], dq: &[f64], foot: (f64, f64), foot_vel: (f64, f64), point: (f64, f64)) -> f64 {
        let pos = self.mass_positions(q, foot);
        let ve = [dq[0], dq[1], dq[2], foot_vel.0, foot_vel.1];
        let mut h = 0.0;
        for (i, m) in self.masses().iter().enumerate() {
            let j = self.mass_jacobian(i, q);
            let vx = linalg::dot(&j[0], &ve);
            let vz = linalg::dot(&j[1], &ve);
            let (rx, rz) = (pos[i].0 - point.0, pos[i].1 - point.1);
            h += m * (rz * vx - rx * vz);
        }
        h + self.link_inertias().iter().zip(dq).map(|(i, w)| i * w).sum::<f64>()
    }

    /// Plastic impact of the swing foot followed by leg relabeling.
    pub fn impact(&self, x: &MechState) -> Result<ImpactResult> {
        let de = self.extended_inertia(&x.q);
        let e = self.swing_foot_jacobian(&x.q);
        let mut sys = Matrix::zeros(7, 7);
        for a in 0..5 {
            for b in 0..5 {
                sys[(a, b)] = de[(a, b)];
            }
            for c in 0..2 {
                sys[(a, 5 + c)] = -e[c][a];
                sys[(5 + c, a)] = e[c][a];
            }
        }
        let ve_minus = [x.dq[0], x.dq[1], x.dq[2], 0.0, 0.0];
        let mut rhs = de.mul_vec(&ve_minus);
        rhs.extend_from_slice(&[0.0, 0.0]);
        let sol = linalg::solve(&sys, &rhs).ok_or(Error::SingularInertia)?;
        let ve_plus = [sol[0], sol[1], sol[2], sol[3], sol[4]];
        let q_plus = relabel(&x.q);
        let dq_plus = relabel(&sol[..3]);
        Ok(ImpactResult {
            post: MechState { q: q_plus, dq: dq_plus },
            extended_velocity: ve_plus,
            impulse: (sol[5], sol[6]),
        })
    }
}

/// Leg swap `(q₀, q₁, q₂) ↦ (q₁, q₀, q₂)`; an involution.
pub fn relabel(v: &[f64]) -> Vec<f64> {
    vec![v[1], v[0], v[2]]
}

/// Outcome of the impact map.
#[derive(Clone, Debug)]
pub struct ImpactResult {
    /// Post-impact state in the relabeled coordinates.
    pub post: MechState,
    /// Post-impact velocity in the pre-impact extended coordinates
    /// `(q̇, ẋ_foot, ż_foot)` of the old stance foot.
    pub extended_velocity: [f64; 5],
    /// Ground impulse at the landing foot (horizontal, vertical).
    pub impulse: (f64, f64),
}
