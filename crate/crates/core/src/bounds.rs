//! Closed-form eigenvalue bounds and the analytic ball eigenvalue.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CylinderBound {
    /// `sup_x int_C |x - y|^-2 dy`, attained at the centre.
    pub m: f64,
    /// `4 pi / M`, a lower bound for `mu_1` of the cylinder.
    pub mu_lower: f64,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// `M = 2 pi h ln(1 + R^2/h^2) + 4 pi R arctan(h/R)` for the cylinder of radius `R` and
/// half-height `h`.
pub fn cylinder_m(radius: f64, half_height: f64) -> Result<f64> {
    check_positive("radius", radius)?;
    check_positive("half-height", half_height)?;
    let (r, h) = (radius, half_height);
    Ok(2.0 * PI * h * (r * r / (h * h)).ln_1p() + 4.0 * PI * r * (h / r).atan())
}

pub fn cylinder_mu_lower(radius: f64, half_height: f64) -> Result<f64> {
    Ok(4.0 * PI / cylinder_m(radius, half_height)?)
}

pub fn cylinder_bound(radius: f64, half_height: f64) -> Result<CylinderBound> {
    let m = cylinder_m(radius, half_height)?;
    Ok(CylinderBound {
        m,
        mu_lower: 4.0 * PI / m,
    })
}

/// `(4 pi / (3 V))^(1/3)`: both `mu_1` and `-mu_{-1}` of a domain of volume `V` exceed it.
pub fn faber_krahn_bound(volume: f64) -> Result<f64> {
    check_positive("volume", volume)?;
    Ok((4.0 * PI / (3.0 * volume)).cbrt())
}

/// `x*/r` with `x*` the root of `tan x = x` in `(pi, 3 pi/2)`, by bisection to `1e-12`.
pub fn ball_mu_reference(radius: f64) -> Result<f64> {
    check_positive("radius", radius)?;
    Ok(tan_fixed_point() / radius)
}

/// Bisection on `sin x - x cos x`, which shares the root and has no pole in the bracket.
fn tan_fixed_point() -> f64 {
    let f = |x: f64| x.sin() - x * x.cos();
    let (mut lo, mut hi) = (PI, 1.5 * PI);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
