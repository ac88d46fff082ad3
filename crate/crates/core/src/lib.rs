//! First positive curl eigenvalue of bounded convex domains.
//!
//! Domains are convex bodies given by support functions ([`convex_body`]), rasterized to a
//! staggered voxel grid ([`grid`]). The curl eigenvalue problem with tangency boundary
//! condition is solved through its inverse, the Leray-projected Biot-Savart operator
//! ([`spectral`]), whose largest positive eigenvalue is `1/mu_1`. On top of that sit the
//! closed-form bounds ([`bounds`]), shape optimization of `|Omega|^{1/3} mu_1`
//! ([`shape_opt`]), the operator-norm distance between subdomains of a box ([`gamma`]) and
//! the batch front-end ([`cli`]).

pub mod bounds;
pub mod cli;
pub mod convex_body;
pub mod error;
pub mod gamma;
pub mod grid;
pub mod rng;
pub mod shape_opt;
pub mod spectral;

pub use error::{Error, Result};
