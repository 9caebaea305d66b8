//! Error type shared by the predictor, simulator and experiment harness.
//!
//! Diagnostics are carried as `f64` regardless of the scalar the caller
//! instantiated, so the variants stay object-safe and printable.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("relaxation time diverges at criticality (eps = 0)")]
    CriticalDivergence,

    #[error("no sign change while bracketing a root: g({lo:e}) = {g_lo:e}, g({hi:e}) = {g_hi:e}")]
    RootNotFound { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },

    #[error("quadrature did not converge: requested {requested:e}, achieved {achieved:e}")]
    QuadratureDidNotConverge { requested: f64, achieved: f64 },

    #[error("ODE integration failed: {0}")]
    OdeFailure(String),

    #[error("evaluation velocity {v:e} reaches the pole v = gamma*sqrt(alpha) = {pole:e}")]
    PoleCrossing { v: f64, pole: f64 },

    #[error("closed form is only valid in the overdamped radial-drive regime: {0}")]
    RegimeViolation(String),

    #[error("defect-loss sum diverges: p*x = {px:e} >= 1 with an unbounded sum")]
    LossSumDiverges { px: f64 },

    #[error("time {t:e} outside tabulated protocol range [{lo:e}, {hi:e}]")]
    TabulatedRange { t: f64, lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("equilibrium search did not converge: force residual {residual:e} after {iters} iterations")]
    EquilibriumNotConverged { residual: f64, iters: usize },

    #[error("ions {i} and {j} crossed at t = {t:e}; trajectory aborted as unphysical")]
    IonCrossing { i: usize, j: usize, t: f64 },

    #[error("ions {i} and {j} are coincident")]
    CoincidentIons { i: usize, j: usize },

    #[error("fit needs at least {needed} usable rows, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
