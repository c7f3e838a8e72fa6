//! Numerical parametrization of the unstable manifold of parabolic maps
//! tangent to the identity, `f(z) = z + z^2 + z^3 + O(z^4)`, and of parabolic
//! skew products `F(t, z) = (t / (1 + t), f_t(z))`.
//!
//! The crate is organised bottom-up:
//!
//! * [`maps`] holds the one-variable maps, bivariate fiber families, the base
//!   Möbius dynamics and the coordinate change to infinity.
//! * [`param`] computes `phi_n(z) = f^n(z / (1 + n z))`, its limit, the
//!   extension of the limit to the plane and the infinity-chart diagnostics.
//! * [`skew`] iterates skew products and computes the fibered version of the
//!   same parametrization together with orbit-bound diagnostics.
//! * [`disks`] locates critical parameters and checks the nesting of vertical
//!   disks on critical fibers.
//!
//! All arithmetic is IEEE double precision.

pub mod disks;
pub mod error;
pub mod fit;
mod limit;
pub mod mapfile;
pub mod maps;
pub mod param;
pub mod skew;

pub use error::{Error, Result};
pub use limit::LimitOptions;
pub use maps::{
    mobius_n, BivariateFamily, Certificate, ChartConstants, ChartRemainder, FamilyKind, MapKind,
    PolynomialMap, Violation,
};
pub use num_complex::Complex64;
pub use param::{DecayFit, DiffSample, DomainVEps, NRange, ParamResult, Parametrization};
pub use skew::{OrbitDiagnostics, SkewMap, SkewPoint};
