//! Scalar abstraction so every numerical routine works for `f32` and `f64`.
//!
//! The trait is deliberately small: `num_traits::Float` supplies the math,
//! and the rest is conversion plumbing plus Gaussian sampling for the
//! Langevin thermostat.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::StandardNormal;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Convert a literal constant. Panics only if the target type cannot
    /// represent finite `f64` values at all, which no float type hits.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant must convert")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("float scalar converts to f64")
    }

    /// One standard normal variate from the given generator.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Scalar for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

impl Scalar for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

/// Apery's constant zeta(3), used by the inhomogeneous-chain coupling.
pub const ZETA_3: f64 = 1.2020569031595943;


#[cfg(test)]
mod generic_instantiation {
    //! The core paths must instantiate for f32 as well as f64.
    use crate::ef_core::{propagation_velocity, relaxation_time, ScalingParams};
    use crate::quench::{epsilon_at, QuenchProtocol};

    #[test]
    fn f32_paths_compile_and_agree_roughly() {
        let p32 = ScalingParams::<f32>::from_base(
            1.0, 1.0, 1.0, 1.0, 2.0, 3.0, 0.0, 22, 1.0, 1.0, 100.0, 1.0, 1.0,
        )
        .unwrap();
        let p64 = ScalingParams::<f64>::from_base(
            1.0, 1.0, 1.0, 1.0, 2.0, 3.0, 0.0, 22, 1.0, 1.0, 100.0, 1.0, 1.0,
        )
        .unwrap();
        let tau32 = relaxation_time(&p32, 0.5f32).unwrap();
        let tau64 = relaxation_time(&p64, 0.5f64).unwrap();
        assert!((tau32 as f64 - tau64).abs() < 1e-6);
        let v32 = propagation_velocity(&p32, 0.5f32);
        let v64 = propagation_velocity(&p64, 0.5f64);
        assert!((v32 as f64 - v64).abs() < 1e-6);
        let proto = QuenchProtocol::<f32>::Linear { tau_q: 100.0 };
        assert_eq!(epsilon_at(&proto, 50.0f32).unwrap(), 0.5f32);
    }
}
