//! Defect scaling for quenched ion Coulomb chains.
//!
//! The crate has two halves that check each other:
//!
//! * a numerical predictor ([`ef_core`]) built on relaxation-time scaling,
//!   a driven freeze-out boundary and an integrated domain length, together
//!   with the classic power-law baseline ([`kzm_baseline`]);
//! * a direct Langevin simulation ([`langevin_sim`]) of an N-ion chain
//!   crossing the linear-to-zigzag transition under the same quench
//!   protocols ([`quench`]), counting kinks as ground truth.
//!
//! [`experiments`] sweeps, fits and compares the two. All numerics are
//! generic over the scalar type; the crate root re-exports `f64` aliases
//! for everyday use.

pub mod chain_geometry;
pub mod ef_core;
pub mod error;
pub mod experiments;
pub mod kzm_baseline;
pub mod langevin_sim;
pub mod numeric;
pub mod quench;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar for the concrete aliases below.
pub type Real = f64;

pub type QuenchProtocol = quench::QuenchProtocol<Real>;
pub type TrapGeometry = quench::TrapGeometry<Real>;
pub type ScalingParams = ef_core::ScalingParams<Real>;
pub type FreezeOut = ef_core::FreezeOut<Real>;
pub type DefectEstimate = ef_core::DefectEstimate<Real>;
pub type DefectLoss = ef_core::DefectLoss<Real>;
pub type KzmPrediction = kzm_baseline::KzmPrediction<Real>;
pub type SimConfig = langevin_sim::SimConfig<Real>;
pub type ChainState = langevin_sim::ChainState<Real>;
pub type KinkReport = langevin_sim::KinkReport<Real>;
pub type SweepResult = experiments::SweepResult<Real>;
pub type PowerLawFit = experiments::PowerLawFit<Real>;
