//! Convex bodies described by their support functions on the sphere.

pub mod format;
pub mod harmonics;
mod quadrature;
mod support;
mod trap;

pub use format::{parse_support_body, read_support_body, write_support_body};
pub use quadrature::{HarmonicTable, SphereQuadrature, DEFAULT_DIRECTIONS};
pub(crate) use support::least_squares_coefficients;
pub use support::{
    diameter, eval_support, hausdorff_distance, is_convex_valid, project_to_convex, volume,
    ConvexityReport, SupportBody, SupportPolytope,
};
pub use trap::{enclosing_cylinder, CylinderSpec, Segment, TrapSegments};

/// Default margin of the sampled convexity certificate.
pub const DEFAULT_CONVEXITY_MARGIN: f64 = 1e-6;

pub(crate) use quadrature::{dot, normalize};
