//! Isothermal incompressible multicomponent mixture transport.
//!
//! The crate implements the constructive machinery for mixtures whose
//! average volume is pressure-invariant: a volume-weighted sum of the
//! partial densities is constant, the velocity field is not solenoidal, and
//! the pressure stays algebraically tied to the densities. The library
//! provides
//!
//! - the basis change to unconstrained coordinates (total density, relative
//!   chemical potentials, volume potential) in [`basis`] and [`thermo`],
//! - the constrained convex dual of the free energy and its derivatives in
//!   [`thermo`],
//! - Onsager mobility closures and their reduced coefficients in
//!   [`closure`],
//! - a one-dimensional time-marching solver for the transformed
//!   parabolic-elliptic-hyperbolic system in [`solver`],
//! - runtime monitors for thresholds, norms and constraint residuals in
//!   [`diagnostics`],
//! - scenario configuration and bit-stable output emission in [`config`]
//!   and [`output`].

pub mod basis;
pub mod closure;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fixtures;
pub mod output;
pub mod solver;
pub mod thermo;

pub use error::{MixError, Result};
