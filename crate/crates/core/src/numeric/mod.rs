//! Numerical kernels: adaptive quadrature, bracketing root finder,
//! embedded Runge-Kutta stepping, Fresnel integrals and least squares.

pub mod fit;
pub mod fresnel;
pub mod ode;
pub mod quad;
pub mod roots;
