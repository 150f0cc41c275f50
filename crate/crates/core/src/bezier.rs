//! Degree-5 Bézier curves in a normalized phase `s ∈ [0, 1]`, one row per output.

use alloc::vec::Vec;

use crate::linalg::{self, Matrix};

pub const DEGREE: usize = 5;
pub const NUM_POINTS: usize = DEGREE + 1;

const BINOM5: [f64; 6] = [1.0, 5.0, 10.0, 10.0, 5.0, 1.0];
const BINOM4: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];
const BINOM3: [f64; 4] = [1.0, 3.0, 3.0, 1.0];

fn ipow(x: f64, n: usize) -> f64 {
    (0..n).fold(1.0, |acc, _| acc * x)
}

/// Bernstein basis of degree 5 at `s`.
pub fn bernstein5(s: f64) -> [f64; 6] {
    let mut out = [0.0; 6];
    let t = 1.0 - s;
    for (i, o) in out.iter_mut().enumerate() {
        *o = BINOM5[i] * ipow(s, i) * ipow(t, DEGREE - i);
    }
    out
}

fn bernstein4(s: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    let t = 1.0 - s;
    for (i, o) in out.iter_mut().enumerate() {
        *o = BINOM4[i] * ipow(s, i) * ipow(t, 4 - i);
    }
    out
}

fn bernstein3(s: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    let t = 1.0 - s;
    for (i, o) in out.iter_mut().enumerate() {
        *o = BINOM3[i] * ipow(s, i) * ipow(t, 3 - i);
    }
    out
}

/// A vector-valued degree-5 Bézier curve. Row `i` holds the six control points of
/// output `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bezier {
    points: Vec<[f64; NUM_POINTS]>,
}

impl Bezier {
    pub fn new(points: Vec<[f64; NUM_POINTS]>) -> Self {
        Self { points }
    }

    /// Every control point equal to `value[i]` on row `i`.
    pub fn constant(value: &[f64]) -> Self {
        Self { points: value.iter().map(|v| [*v; NUM_POINTS]).collect() }
    }

    pub fn rows(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[[f64; NUM_POINTS]] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [[f64; NUM_POINTS]] {
        &mut self.points
    }

    /// Control points as an `m×6` matrix.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.rows(), NUM_POINTS, |i, j| self.points[i][j])
    }

    pub fn eval(&self, s: f64) -> Vec<f64> {
        let b = bernstein5(s);
        self.points.iter().map(|p| linalg::dot(p, &b)).collect()
    }

    /// First derivative with respect to `s`.
    pub fn deriv(&self, s: f64) -> Vec<f64> {
        let b = bernstein4(s);
        self.points
            .iter()
            .map(|p| {
                let mut acc = 0.0;
                for i in 0..DEGREE {
                    acc += (p[i + 1] - p[i]) * b[i];
                }
                DEGREE as f64 * acc
            })
            .collect()
    }

    /// Second derivative with respect to `s`.
    pub fn deriv2(&self, s: f64) -> Vec<f64> {
        let b = bernstein3(s);
        self.points
            .iter()
            .map(|p| {
                let mut acc = 0.0;
                for i in 0..DEGREE - 1 {
                    acc += (p[i + 2] - 2.0 * p[i + 1] + p[i]) * b[i];
                }
                (DEGREE * (DEGREE - 1)) as f64 * acc
            })
            .collect()
    }

    /// Value, slope and curvature. Outside `[0, 1]` the curve continues as
    /// the same quintic polynomial, which keeps all three continuous across
    /// the phase endpoints.
    pub fn eval_extended(&self, s: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (self.eval(s), self.deriv(s), self.deriv2(s))
    }
}

/// Design matrix of the Bernstein basis at the given phases (`k×6`).
pub fn bernstein_design(phases: &[f64]) -> Matrix {
    let mut a = Matrix::zeros(phases.len(), NUM_POINTS);
    for (i, s) in phases.iter().enumerate() {
        let b = bernstein5(*s);
        for j in 0..NUM_POINTS {
            a[(i, j)] = b[j];
        }
    }
    a
}
