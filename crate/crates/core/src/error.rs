use alloc::string::String;
use core::fmt;

/// Errors raised by the dynamics, CLF, controller and model layers.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// A vector or matrix had the wrong size.
    Dimension { what: &'static str, expected: usize, got: usize },
    /// State entries or dynamics terms were NaN or infinite.
    NonFiniteDynamics,
    /// The inertia matrix failed the positive-definiteness check.
    SingularInertia,
    /// The phase variable left the extrapolation guard band.
    PhaseOutOfRange { theta: f64, lo: f64, hi: f64 },
    /// The decoupling matrix is numerically singular.
    SingularDecoupling { cond: f64 },
    /// The matrix handed to the Lyapunov solver has an eigenvalue with real part ≥ −1e-12.
    NotHurwitz { max_real: f64 },
    /// The Lyapunov solve produced a residual above tolerance.
    SolveFailed { residual: f64 },
    /// ε outside (0, 1).
    BadEpsilon(f64),
    /// Gains or weight matrices that are not positive (definite).
    InvalidGains(&'static str),
    /// ψ₀ > 0 with a vanishing ψ₁.
    DegenerateGradient,
    /// Bernstein design matrix too badly conditioned for a least-squares fit.
    RankDeficientFit { cond: f64 },
    /// Inconsistent saturation bounds or controller configuration.
    InvalidConfig(String),
    /// Invalid physical parameters.
    InvalidParams(String),
    /// The walker fell (torso pitch or phase guard).
    FallDetected(String),
    /// No impact within the allotted time.
    StepTimeout { elapsed: f64 },
    /// Guard crossed with a vanishing approach velocity.
    GrazingImpact { rate: f64 },
    /// An iterative search ran out of iterations.
    NoConvergence { residual: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { what, expected, got } => {
                write!(f, "{what}: expected dimension {expected}, got {got}")
            }
            Error::NonFiniteDynamics => write!(f, "non-finite state or dynamics term"),
            Error::SingularInertia => write!(f, "inertia matrix is not positive definite"),
            Error::PhaseOutOfRange { theta, lo, hi } => {
                write!(f, "phase {theta} outside guard band [{lo}, {hi}]")
            }
            Error::SingularDecoupling { cond } => {
                write!(f, "decoupling matrix is singular (condition number {cond:e})")
            }
            Error::NotHurwitz { max_real } => {
                write!(f, "matrix is not Hurwitz (max eigenvalue real part {max_real:e})")
            }
            Error::SolveFailed { residual } => {
                write!(f, "Lyapunov solve residual {residual:e} above tolerance")
            }
            Error::BadEpsilon(eps) => write!(f, "epsilon must lie in (0, 1), got {eps}"),
            Error::InvalidGains(what) => write!(f, "invalid gains: {what}"),
            Error::DegenerateGradient => write!(f, "psi0 > 0 with vanishing psi1"),
            Error::RankDeficientFit { cond } => {
                write!(f, "Bernstein design matrix is rank deficient (condition number {cond:e})")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::InvalidParams(msg) => write!(f, "invalid parameters: {msg}"),
            Error::FallDetected(why) => write!(f, "fall detected: {why}"),
            Error::StepTimeout { elapsed } => write!(f, "no impact after {elapsed} s"),
            Error::GrazingImpact { rate } => {
                write!(f, "grazing impact (guard rate {rate:e})")
            }
            Error::NoConvergence { residual } => {
                write!(f, "no convergence (best residual {residual:e})")
            }
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}
