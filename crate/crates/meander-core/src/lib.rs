//! Brownian motion conditioned to stay in a cone: spectral data, heat
//! kernels, entrance laws, path samplers, and Monte Carlo verification.
//!
//! The library is organised around one object: the law of a Brownian path
//! started near the vertex of a convex cone `C` and conditioned to stay in
//! `C` for one unit of time (the *C-Brownian meander*). The modules are
//!
//! - [`specfun`] — modified Bessel `I_ν`, log-gamma, Legendre `P_ν`;
//! - [`cones`] — cone geometry, paths, exit detection, Brownian scaling;
//! - [`spectrum`] — Dirichlet spectral data of the cone cross-section;
//! - [`kernel`] — heat-kernel series, the entrance density `e(t, y)`,
//!   survival probabilities and the meander exit law;
//! - [`sampler`] — reproducible path samplers (plain, conditioned, meander);
//! - [`verify`] — statistical checks of the analytic predictions against
//!   sampled paths, reported as [`verify::McReport`]s.

pub mod cones;
pub mod error;
pub mod kernel;
pub mod sampler;
pub mod specfun;
pub mod spectrum;
pub mod stats;
pub mod verify;

mod quad;

pub use error::{Error, Result};
