//! Koch-type snowflake domains: construction, boundary geometry, heat content
//! and the branching-process limits of their statistically self-similar
//! variants.
//!
//! Module map:
//!
//! - [`generator`]: building blocks `K(a)`, scale-homogeneous Koch curves and
//!   closed snowflakes, exact segment counts.
//! - [`carpet`]: Bedford–McMullen patterns, their dimension formulas and the
//!   continuous self-affine graph domain.
//! - [`dimension`]: exact, ergodic and profile-based dimension estimates and
//!   iterated-logarithm envelopes.
//! - [`tubular`]: rasterized inner tube volumes and their analytic bounds.
//! - [`heat`]: finite-difference and Monte Carlo heat content, bound
//!   functionals and log-slope diagnostics.
//! - [`gbp`]: general (Crump–Mode–Jagers) branching processes.
//! - [`selfsim`]: statistically self-similar snowflakes coupled to their
//!   branching trees, and the limit experiments.

pub mod carpet;
pub mod dimension;
pub mod error;
pub mod gbp;
pub mod generator;
pub mod geometry;
pub mod heat;
pub mod io;
pub mod quadrature;
pub mod rng;
pub mod selfsim;
pub mod spatial;
pub mod stats;
pub mod tubular;

pub use error::{Error, Result};
pub use geometry::{simplicity_check, Point, Polyline};
pub use spatial::Domain;
