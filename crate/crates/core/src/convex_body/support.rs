use nalgebra::{DMatrix, DVector};

use super::harmonics::{degree_order, harmonic_count, harmonic_index, spherical_harmonics};
use super::quadrature::{dot, SphereQuadrature};
use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Convex body encoded by the real spherical-harmonic expansion of its support function.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportBody {
    lmax: usize,
    axisymmetric: bool,
    coeffs: Vec<f64>,
}

impl SupportBody {
    pub fn new(lmax: usize, coeffs: Vec<f64>, axisymmetric: bool) -> Result<Self> {
        if coeffs.len() != harmonic_count(lmax) {
            return Err(Error::InvalidInput(format!(
                "expected {} coefficients for lmax={lmax}, got {}",
                harmonic_count(lmax),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite support coefficient".into()));
        }
        if axisymmetric {
            for (k, c) in coeffs.iter().enumerate() {
                if degree_order(k).1 != 0 && *c != 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "axisymmetric body has non-zonal coefficient at index {k}"
                    )));
                }
            }
        }
        Ok(SupportBody {
            lmax,
            axisymmetric,
            coeffs,
        })
    }

    /// Ball of the given radius centred at the origin.
    pub fn ball(radius: f64) -> Self {
        SupportBody {
            lmax: 0,
            axisymmetric: true,
            coeffs: vec![radius * (4.0 * std::f64::consts::PI).sqrt()],
        }
    }

    /// Least-squares fit of a support function sampled on `quad`.
    pub fn fit<F>(quad: &SphereQuadrature, lmax: usize, axisymmetric: bool, support: F) -> Self
    where
        F: Fn([f64; 3]) -> f64,
    {
        let targets: Vec<f64> = quad.directions().iter().map(|d| support(*d)).collect();
        let coeffs = least_squares_coefficients(quad, lmax, axisymmetric, &targets);
        SupportBody {
            lmax,
            axisymmetric,
            coeffs,
        }
    }

    /// Ellipsoid with semi-axes `a, b, c` along x, y, z. Axisymmetric when `a == b`.
    pub fn ellipsoid(quad: &SphereQuadrature, lmax: usize, a: f64, b: f64, c: f64) -> Self {
        Self::fit(quad, lmax, a == b, |d| {
            (a * a * d[0] * d[0] + b * b * d[1] * d[1] + c * c * d[2] * d[2]).sqrt()
        })
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn is_axisymmetric(&self) -> bool {
        self.axisymmetric
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, l: usize, m: i64) -> f64 {
        if l > self.lmax {
            0.0
        } else {
            self.coeffs[harmonic_index(l, m)]
        }
    }

    /// True when every coefficient with `m != 0` is exactly zero.
    pub fn has_zonal_support(&self) -> bool {
        self.coeffs
            .iter()
            .enumerate()
            .all(|(k, c)| degree_order(k).1 == 0 || *c == 0.0)
    }

    /// Same body expressed with a different maximal degree (truncating or zero-padding).
    pub fn with_lmax(&self, lmax: usize) -> Self {
        let mut coeffs = vec![0.0; harmonic_count(lmax)];
        let n = coeffs.len().min(self.coeffs.len());
        coeffs[..n].copy_from_slice(&self.coeffs[..n]);
        SupportBody {
            lmax,
            axisymmetric: self.axisymmetric,
            coeffs,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SupportBody {
            lmax: self.lmax,
            axisymmetric: self.axisymmetric,
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    /// Translation by `t`; the support function gains `t . v`, which lives in degree 1.
    pub fn translated(&self, t: [f64; 3]) -> Self {
        let mut out = if self.lmax == 0 {
            self.with_lmax(1)
        } else {
            self.clone()
        };
        let s = (4.0 * std::f64::consts::PI / 3.0).sqrt();
        out.coeffs[harmonic_index(1, 1)] += s * t[0];
        out.coeffs[harmonic_index(1, -1)] += s * t[1];
        out.coeffs[harmonic_index(1, 0)] += s * t[2];
        out.axisymmetric = self.axisymmetric && t[0] == 0.0 && t[1] == 0.0;
        out
    }

    /// Point reflection `x -> -x`: odd degrees change sign.
    pub fn reflected(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| if degree_order(k).0 % 2 == 1 { -c } else { *c })
            .collect();
        SupportBody {
            lmax: self.lmax,
            axisymmetric: self.axisymmetric,
            coeffs,
        }
    }

    /// Coefficient-wise sum with `other` (Minkowski sum of the bodies when both are convex).
    pub fn added(&self, other: &SupportBody) -> Self {
        let lmax = self.lmax.max(other.lmax);
        let mut out = self.with_lmax(lmax);
        for (k, c) in other.coeffs.iter().enumerate() {
            out.coeffs[k] += c;
        }
        out.axisymmetric = self.axisymmetric && other.axisymmetric;
        out
    }

    /// Support values at every direction of `quad`.
    pub fn support_values(&self, quad: &SphereQuadrature) -> Vec<f64> {
        let table = quad.table(self.lmax);
        (0..quad.len())
            .map(|i| {
                table
                    .row(i)
                    .iter()
                    .zip(&self.coeffs)
                    .map(|(y, c)| y * c)
                    .sum()
            })
            .collect()
    }

    /// Contact points `grad H(v)` of the supporting planes at every direction of `quad`.
    pub fn contact_points(&self, quad: &SphereQuadrature) -> Vec<[f64; 3]> {
        let table = quad.table(self.lmax);
        (0..quad.len())
            .map(|i| {
                let mut p = [0.0; 3];
                for (k, c) in self.coeffs.iter().enumerate() {
                    let g = table.gradients[i * table.count + k];
                    for a in 0..3 {
                        p[a] += c * g[a];
                    }
                }
                p
            })
            .collect()
    }

    /// Axis-aligned bounding box from the support function along `+-e_i`.
    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for a in 0..3 {
            let mut e = [0.0; 3];
            e[a] = 1.0;
            hi[a] = eval_support(self, e);
            e[a] = -1.0;
            lo[a] = -eval_support(self, e);
        }
        (lo, hi)
    }

    pub fn polytope(&self, quad: &SphereQuadrature) -> SupportPolytope {
        SupportPolytope {
            normals: quad.directions().to_vec(),
            offsets: self.support_values(quad),
        }
    }
}

pub(crate) fn least_squares_coefficients(
    quad: &SphereQuadrature,
    lmax: usize,
    axisymmetric: bool,
    targets: &[f64],
) -> Vec<f64> {
    let count = harmonic_count(lmax);
    let columns: Vec<usize> = (0..count)
        .filter(|k| !axisymmetric || degree_order(*k).1 == 0)
        .collect();
    let table = quad.table(lmax);
    let n = quad.len();
    let design = DMatrix::from_fn(n, columns.len(), |i, j| {
        table.values[i * count + columns[j]]
    });
    let rhs = DVector::from_column_slice(targets);
    let normal = design.transpose() * &design;
    let projected = design.transpose() * rhs;
    let solution = normal
        .cholesky()
        .map(|c| c.solve(&projected))
        .expect("harmonic normal equations are positive definite on a fine rule");
    let mut coeffs = vec![0.0; count];
    for (j, k) in columns.iter().enumerate() {
        coeffs[*k] = solution[j];
    }
    coeffs
}

/// Support value `h(v) = sum c_k Y_k(v)` at a unit direction.
pub fn eval_support(body: &SupportBody, direction: [f64; 3]) -> f64 {
    spherical_harmonics(direction, body.lmax)
        .iter()
        .zip(&body.coeffs)
        .map(|(y, c)| y * c)
        .sum()
}

/// Outcome of the sampled convexity certificate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvexityReport {
    pub valid: bool,
    /// Minimum over directions of the smallest eigenvalue of `Hess_S h + h I`.
    pub min_eigen: f64,
    pub min_support: f64,
    /// Direction index where `min_eigen` is attained.
    pub worst_direction: usize,
}

/// Sampled convexity certificate: `Hess_S h + h I >= margin` at every direction of `quad`
/// and `h > 0` (origin interior). Use a rule with at least a few times `(lmax+1)^2`
/// directions for the sampling to mean anything.
pub fn is_convex_valid(
    body: &SupportBody,
    quad: &SphereQuadrature,
    margin: f64,
) -> ConvexityReport {
    let table = quad.table(body.lmax);
    let mut min_eigen = f64::INFINITY;
    let mut min_support = f64::INFINITY;
    let mut worst_direction = 0;
    for i in 0..quad.len() {
        let mut hess = [0.0; 3];
        let mut value = 0.0;
        for (k, c) in body.coeffs.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let t = table.tangential_hessians[i * table.count + k];
            hess[0] += c * t[0];
            hess[1] += c * t[1];
            hess[2] += c * t[2];
            value += c * table.values[i * table.count + k];
        }
        let mean = 0.5 * (hess[0] + hess[2]);
        let half_diff = 0.5 * (hess[0] - hess[2]);
        let lowest = mean - (half_diff * half_diff + hess[1] * hess[1]).sqrt();
        if lowest < min_eigen {
            min_eigen = lowest;
            worst_direction = i;
        }
        min_support = min_support.min(value);
    }
    ConvexityReport {
        valid: min_eigen >= margin && min_support > 0.0,
        min_eigen,
        min_support,
        worst_direction,
    }
}

/// Shrinks every coefficient of degree `>= 1` by a common factor in `(0, 1]`, chosen by
/// bisection, until the convexity certificate holds at `margin`.
pub fn project_to_convex(
    body: &SupportBody,
    quad: &SphereQuadrature,
    margin: f64,
) -> Result<SupportBody> {
    if is_convex_valid(body, quad, margin).valid {
        return Ok(body.clone());
    }
    let damped = |gamma: f64| {
        let mut out = body.clone();
        for c in out.coeffs.iter_mut().skip(1) {
            *c *= gamma;
        }
        out
    };
    let ball = damped(0.0);
    if !is_convex_valid(&ball, quad, margin).valid {
        return Err(Error::ProjectionFailed {
            margin,
            min_eigen: is_convex_valid(&ball, quad, margin).min_eigen,
        });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if is_convex_valid(&damped(mid), quad, margin).valid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(damped(lo))
}

/// Voxel-count volume on the lattice grid with `resolution` cells across the longest
/// bounding-box edge.
pub fn volume(body: &SupportBody, quad: &SphereQuadrature, resolution: usize) -> f64 {
    let grid = GridSpec::for_body(body, resolution);
    let poly = body.polytope(quad);
    let count = (0..grid.cell_count())
        .filter(|c| poly.contains(grid.cell_center(*c)))
        .count();
    count as f64 * grid.cell_volume()
}

/// Largest width `h(v) + h(-v)` over the rule.
pub fn diameter(body: &SupportBody, quad: &SphereQuadrature) -> f64 {
    let h = body.support_values(quad);
    diameter_realizer(&h, quad).1
}

/// First direction index (in rule order) attaining the largest width, and the width.
pub(crate) fn diameter_realizer(h: &[f64], quad: &SphereQuadrature) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..quad.len() {
        let w = h[i] + h[quad.antipode(i)];
        if w > best.1 {
            best = (i, w);
        }
    }
    best
}

/// `sup_v |h_a(v) - h_b(v)|` over the rule.
pub fn hausdorff_distance(a: &SupportBody, b: &SupportBody, quad: &SphereQuadrature) -> f64 {
    let ha = a.support_values(quad);
    let hb = b.support_values(quad);
    ha.iter()
        .zip(&hb)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Intersection of the supporting half-spaces `x . v <= h(v)` over a direction rule.
#[derive(Clone, Debug)]
pub struct SupportPolytope {
    pub normals: Vec<[f64; 3]>,
    pub offsets: Vec<f64>,
}

impl SupportPolytope {
    pub fn contains(&self, x: [f64; 3]) -> bool {
        self.normals
            .iter()
            .zip(&self.offsets)
            .all(|(n, h)| dot(*n, x) <= *h)
    }

    /// Largest `max_v (x . v - h(v))`; negative inside, and its argmax approximates the
    /// outward normal of the nearest boundary patch.
    pub fn excess(&self, x: [f64; 3]) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, (n, h)) in self.normals.iter().zip(&self.offsets).enumerate() {
            let e = dot(*n, x) - h;
            if e > best.0 {
                best = (e, i);
            }
        }
        best
    }

    /// Parameter interval `[s0, s1]` of the line `p + s d` inside the polytope, if any.
    pub fn clip_line(&self, p: [f64; 3], d: [f64; 3]) -> Option<(f64, f64)> {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (n, h) in self.normals.iter().zip(&self.offsets) {
            let rate = dot(*n, d);
            let slack = h - dot(*n, p);
            if rate.abs() < 1e-14 {
                if slack < 0.0 {
                    return None;
                }
            } else if rate > 0.0 {
                hi = hi.min(slack / rate);
            } else {
                lo = lo.max(slack / rate);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn quad() -> SphereQuadrature {
        SphereQuadrature::fibonacci(1024)
    }

    #[test]
    fn unit_ball_support_is_one() {
        let b = SupportBody::ball(1.0);
        for d in quad().directions().iter().step_by(37) {
            assert!((eval_support(&b, *d) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn scaling_is_homogeneous() {
        let q = quad();
        let body = SupportBody::ellipsoid(&q, 6, 1.0, 1.2, 0.8);
        let d = [0.6, 0.0, 0.8];
        assert!((eval_support(&body.scaled(2.5), d) - 2.5 * eval_support(&body, d)).abs() < 1e-12);
        assert!((diameter(&body.scaled(3.0), &q) - 3.0 * diameter(&body, &q)).abs() < 1e-12);
    }

    #[test]
    fn width_nonnegative() {
        let q = quad();
        let body = SupportBody::ellipsoid(&q, 6, 1.0, 0.5, 2.0).translated([0.3, -0.2, 0.1]);
        let h = body.support_values(&q);
        for i in 0..q.len() {
            assert!(h[i] + h[q.antipode(i)] >= 0.0);
        }
    }

    #[test]
    fn ball_certificate() {
        let q = quad();
        let r = is_convex_valid(&SupportBody::ball(1.0), &q, 0.0);
        assert!(r.valid);
        assert!((r.min_eigen - 1.0).abs() < 1e-12);
        let r = is_convex_valid(&SupportBody::ball(2.5), &q, 0.0);
        assert!((r.min_eigen - 2.5).abs() < 1e-12);
    }

    #[test]
    fn translation_preserves_certificate() {
        let q = quad();
        let r = is_convex_valid(
            &SupportBody::ball(1.0).translated([0.2, 0.1, -0.3]),
            &q,
            0.0,
        );
        assert!((r.min_eigen - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ellipsoid_fit_reproduces_axes() {
        let q = SphereQuadrature::default();
        let body = SupportBody::ellipsoid(&q, 10, 1.0, 1.0, 1.5);
        assert!(body.has_zonal_support());
        assert!((eval_support(&body, [0.0, 0.0, 1.0]) - 1.5).abs() < 5e-3);
        assert!((eval_support(&body, [1.0, 0.0, 0.0]) - 1.0).abs() < 5e-3);
    }

    #[test]
    fn concentric_and_translated_hausdorff() {
        let q = quad();
        let a = SupportBody::ball(1.0);
        assert!((hausdorff_distance(&a, &SupportBody::ball(1.5), &q) - 0.5).abs() < 1e-12);
        assert_eq!(hausdorff_distance(&a, &a, &q), 0.0);
    }

    #[test]
    fn ball_volume_and_diameter() {
        let q = quad();
        let v = volume(&SupportBody::ball(1.0), &q, 64);
        assert!((v / (4.0 * PI / 3.0) - 1.0).abs() < 0.02, "{v}");
        assert!((diameter(&SupportBody::ball(1.0), &q) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn projection_fixed_point_for_ball() {
        let q = quad();
        let b = SupportBody::ball(1.0);
        assert_eq!(project_to_convex(&b, &q, 1e-6).unwrap(), b);
    }

    #[test]
    fn projection_fails_only_when_margin_exceeds_radius() {
        let q = quad();
        let b = SupportBody::ball(0.5);
        assert!(matches!(
            project_to_convex(&b, &q, 1.0),
            Err(Error::ProjectionFailed { .. })
        ));
    }

    #[test]
    fn reflection_flips_odd_degrees() {
        let q = quad();
        let b = SupportBody::ball(1.0).translated([0.1, 0.2, 0.3]);
        let r = b.reflected();
        let d = [0.0, 0.6, 0.8];
        assert!((eval_support(&r, d) - eval_support(&b, [0.0, -0.6, -0.8])).abs() < 1e-13);
        assert!(is_convex_valid(&r, &q, 0.0).valid);
    }

    #[test]
    fn clip_line_through_ball() {
        let q = quad();
        let p = SupportBody::ball(1.0).polytope(&q);
        let (a, b) = p.clip_line([0.0; 3], [0.0, 0.0, 1.0]).unwrap();
        assert!((a + 1.0).abs() < 1e-2 && (b - 1.0).abs() < 1e-2);
        assert!(p.clip_line([0.0, 3.0, 0.0], [0.0, 0.0, 1.0]).is_none());
    }

    #[test]
    fn rejects_non_zonal_axisymmetric() {
        let mut c = vec![0.0; 4];
        c[0] = 1.0;
        c[1] = 0.1;
        assert!(SupportBody::new(1, c, true).is_err());
    }
}
