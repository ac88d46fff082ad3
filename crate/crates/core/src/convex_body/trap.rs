//! Enclosing cylinder built from three nested maximal segments of a convex body.
//!
//! `L3` realizes the diameter, `L2` the diameter of the widest cross-section
//! perpendicular to `L3`, and `L1` is the longest chord perpendicular to both. The body
//! then sits inside a cylinder of radius `2|L3|` and half-height `|L1|` with axis along
//! `L1`. All chords are measured on the supporting polytope of the direction rule.

use super::quadrature::{cross, dot, normalize, tangent_frame, SphereQuadrature};
use super::support::{diameter_realizer, eval_support, SupportBody, SupportPolytope};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CylinderSpec {
    pub radius: f64,
    pub half_height: f64,
    /// Unit axis direction.
    pub axis: [f64; 3],
    pub center: [f64; 3],
}

impl CylinderSpec {
    pub fn new(radius: f64, half_height: f64, axis: [f64; 3], center: [f64; 3]) -> Result<Self> {
        if !(radius > 0.0 && half_height > 0.0) {
            return Err(Error::InvalidInput(format!(
                "cylinder needs positive radius and half-height, got R={radius}, h={half_height}"
            )));
        }
        Ok(CylinderSpec {
            radius,
            half_height,
            axis: normalize(axis),
            center,
        })
    }

    /// Cylinder `D_R x (-h, h)` centred at the origin with axis `z`.
    pub fn upright(radius: f64, half_height: f64) -> Result<Self> {
        Self::new(radius, half_height, [0.0, 0.0, 1.0], [0.0; 3])
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CylinderSpec {
            radius: self.radius * factor,
            half_height: self.half_height * factor,
            axis: self.axis,
            center: self.center.map(|c| c * factor),
        }
    }

    /// Signed containment margin: non-negative iff `x` lies in the closed cylinder.
    pub fn margin(&self, x: [f64; 3]) -> f64 {
        let r = [
            x[0] - self.center[0],
            x[1] - self.center[1],
            x[2] - self.center[2],
        ];
        let axial = dot(r, self.axis);
        let radial2 = (dot(r, r) - axial * axial).max(0.0);
        (self.radius - radial2.sqrt()).min(self.half_height - axial.abs())
    }

    pub fn contains(&self, x: [f64; 3]) -> bool {
        self.margin(x) >= 0.0
    }

    pub fn volume(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius * 2.0 * self.half_height
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: [f64; 3],
    pub end: [f64; 3],
}

impl Segment {
    pub fn length(&self) -> f64 {
        let d = sub(self.end, self.start);
        dot(d, d).sqrt()
    }

    pub fn direction(&self) -> [f64; 3] {
        normalize(sub(self.end, self.start))
    }

    pub fn midpoint(&self) -> [f64; 3] {
        [
            0.5 * (self.start[0] + self.end[0]),
            0.5 * (self.start[1] + self.end[1]),
            0.5 * (self.start[2] + self.end[2]),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrapSegments {
    pub l3: Segment,
    pub l2: Segment,
    pub l1: Segment,
    /// Longest chord inside the `L2` cross-section perpendicular to `L2`.
    pub l2_perp: Segment,
}

impl TrapSegments {
    pub fn lengths(&self) -> [f64; 3] {
        [self.l1.length(), self.l2.length(), self.l3.length()]
    }

    /// Empirical trapping product `|L1|^2 |L3|`.
    pub fn trapping_product(&self) -> f64 {
        let l1 = self.l1.length();
        l1 * l1 * self.l3.length()
    }

    /// `|L2| |L2perp| |L3|`, six times the volume of the inscribed double pyramid.
    pub fn pyramid_product(&self) -> f64 {
        self.l2.length() * self.l2_perp.length() * self.l3.length()
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn along(p: [f64; 3], d: [f64; 3], s: f64) -> [f64; 3] {
    [p[0] + s * d[0], p[1] + s * d[1], p[2] + s * d[2]]
}

fn chord(poly: &SupportPolytope, foot: [f64; 3], dir: [f64; 3]) -> Option<Segment> {
    poly.clip_line(foot, dir).map(|(s0, s1)| Segment {
        start: along(foot, dir, s0),
        end: along(foot, dir, s1),
    })
}

fn chord_length(poly: &SupportPolytope, foot: [f64; 3], dir: [f64; 3]) -> f64 {
    poly.clip_line(foot, dir).map_or(0.0, |(s0, s1)| s1 - s0)
}

/// Widest chord of the planar section through `center` with in-plane frame `(e1, e2)`.
fn section_diameter(
    poly: &SupportPolytope,
    center: [f64; 3],
    e1: [f64; 3],
    e2: [f64; 3],
    rays: usize,
) -> Option<Segment> {
    let mut pts = Vec::with_capacity(rays);
    for r in 0..rays {
        let theta = 2.0 * std::f64::consts::PI * r as f64 / rays as f64;
        let dir = [
            theta.cos() * e1[0] + theta.sin() * e2[0],
            theta.cos() * e1[1] + theta.sin() * e2[1],
            theta.cos() * e1[2] + theta.sin() * e2[2],
        ];
        let (_, s1) = poly.clip_line(center, dir)?;
        pts.push(along(center, dir, s1.max(0.0)));
    }
    let mut best: Option<(f64, Segment)> = None;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = sub(pts[i], pts[j]);
            let len2 = dot(d, d);
            if best.as_ref().is_none_or(|(b, _)| len2 > *b) {
                best = Some((
                    len2,
                    Segment {
                        start: pts[i],
                        end: pts[j],
                    },
                ));
            }
        }
    }
    best.map(|(_, s)| s)
}

/// Maximizes the chord length along `dir` over feet `origin + u*e_u + v*e_v` in a box,
/// by a grid scan followed by compass search (chord length is concave in the foot).
fn longest_chord_over_plane(
    poly: &SupportPolytope,
    origin: [f64; 3],
    e_u: [f64; 3],
    e_v: Option<[f64; 3]>,
    u_range: (f64, f64),
    v_range: (f64, f64),
    dir: [f64; 3],
    samples: usize,
) -> Segment {
    let foot = |u: f64, v: f64| {
        let p = along(origin, e_u, u);
        match e_v {
            Some(ev) => along(p, ev, v),
            None => p,
        }
    };
    let v_samples = if e_v.is_some() { samples } else { 1 };
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..samples {
        let u = u_range.0 + (u_range.1 - u_range.0) * (i as f64 + 0.5) / samples as f64;
        for j in 0..v_samples {
            let v = if e_v.is_some() {
                v_range.0 + (v_range.1 - v_range.0) * (j as f64 + 0.5) / samples as f64
            } else {
                0.0
            };
            let len = chord_length(poly, foot(u, v), dir);
            if len > best.0 {
                best = (len, u, v);
            }
        }
    }
    let mut step_u = (u_range.1 - u_range.0) / samples as f64;
    let mut step_v = if e_v.is_some() {
        (v_range.1 - v_range.0) / samples as f64
    } else {
        0.0
    };
    for _ in 0..60 {
        let mut improved = false;
        for (du, dv) in [(step_u, 0.0), (-step_u, 0.0), (0.0, step_v), (0.0, -step_v)] {
            if du == 0.0 && dv == 0.0 {
                continue;
            }
            let len = chord_length(poly, foot(best.1 + du, best.2 + dv), dir);
            if len > best.0 {
                best = (len, best.1 + du, best.2 + dv);
                improved = true;
            }
        }
        if !improved {
            step_u *= 0.5;
            step_v *= 0.5;
        }
    }
    chord(poly, foot(best.1, best.2), dir).expect("scan retained a foot with a non-empty chord")
}

/// Builds `L3`, `L2`, `L1` (plus `L2perp`) and the enclosing cylinder, then checks every
/// boundary contact point of the rule against the cylinder.
pub fn enclosing_cylinder(
    body: &SupportBody,
    quad: &SphereQuadrature,
    resolution: usize,
) -> Result<(CylinderSpec, TrapSegments)> {
    let resolution = resolution.max(8);
    let poly = body.polytope(quad);
    let h = &poly.offsets;
    let (i_star, _) = diameter_realizer(h, quad);
    let a = quad.directions()[i_star];
    let contacts = body.contact_points(quad);
    let mid = {
        let p = contacts[i_star];
        let q = contacts[quad.antipode(i_star)];
        [
            (p[0] + q[0]) / 2.0,
            (p[1] + q[1]) / 2.0,
            (p[2] + q[2]) / 2.0,
        ]
    };
    let l3 = chord(&poly, mid, a)
        .ok_or_else(|| Error::InvalidInput("diameter chord misses the body".into()))?;
    let d = l3.length();

    // L2: widest section perpendicular to L3.
    let (e1, e2) = tangent_frame(a);
    let rays = (4 * resolution).max(64);
    let section_at = |t: f64| section_diameter(&poly, along(l3.start, a, t), e1, e2, rays);
    let mut best_t = 0.5 * d;
    let mut l2 =
        section_at(best_t).ok_or_else(|| Error::InvalidInput("empty mid-section".into()))?;
    for i in 0..resolution {
        let t = d * (i as f64 + 0.5) / resolution as f64;
        if let Some(s) = section_at(t) {
            if s.length() > l2.length() {
                l2 = s;
                best_t = t;
            }
        }
    }
    let dt = d / resolution as f64;
    for i in 0..=10 {
        let t = (best_t - dt + 2.0 * dt * i as f64 / 10.0).clamp(0.0, d);
        if let Some(s) = section_at(t) {
            if s.length() > l2.length() {
                l2 = s;
                best_t = t;
            }
        }
    }
    let b = {
        let raw = l2.direction();
        let proj = dot(raw, a);
        normalize([
            raw[0] - proj * a[0],
            raw[1] - proj * a[1],
            raw[2] - proj * a[2],
        ])
    };
    let n = normalize(cross(b, a));

    // L2perp: longest chord along n with foot on the line of L2 (inside the section).
    let l2_perp = longest_chord_over_plane(
        &poly,
        l2.start,
        l2.direction(),
        None,
        (0.0, l2.length()),
        (0.0, 0.0),
        n,
        resolution,
    );

    // L1: longest chord along n over the whole plane spanned by L3 and L2.
    let b_lo = -eval_support(body, b.map(|x| -x)) - dot(l3.start, b);
    let b_hi = eval_support(body, b) - dot(l3.start, b);
    let l1 = longest_chord_over_plane(
        &poly,
        l3.start,
        a,
        Some(b),
        (0.0, d),
        (b_lo, b_hi),
        n,
        resolution,
    );

    let neg_n = n.map(|x| -x);
    let axial_center = 0.5 * (eval_support(body, n) - eval_support(body, neg_n));
    let m = l3.midpoint();
    let m_axial = dot(m, n);
    let center = [
        m[0] + (axial_center - m_axial) * n[0],
        m[1] + (axial_center - m_axial) * n[1],
        m[2] + (axial_center - m_axial) * n[2],
    ];
    let cylinder = CylinderSpec::new(2.0 * d, l1.length(), n, center)?;
    let tolerance = 1e-9 * d;
    for p in &contacts {
        let margin = cylinder.margin(*p);
        if margin < -tolerance {
            return Err(Error::Containment {
                point: *p,
                excess: -margin,
            });
        }
    }
    Ok((
        cylinder,
        TrapSegments {
            l3,
            l2,
            l1,
            l2_perp,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_cylinder() {
        let q = SphereQuadrature::fibonacci(1024);
        let (cyl, segs) = enclosing_cylinder(&SupportBody::ball(1.0), &q, 16).unwrap();
        assert!((cyl.radius - 4.0).abs() < 1e-2);
        assert!((cyl.half_height - 2.0).abs() < 2e-2, "{}", cyl.half_height);
        let [l1, l2, l3] = segs.lengths();
        assert!(l1 <= l2 + 1e-2 && l2 <= l3 + 1e-2, "{l1} {l2} {l3}");
    }

    #[test]
    fn segments_are_mutually_orthogonal() {
        let q = SphereQuadrature::fibonacci(1024);
        let body = SupportBody::ellipsoid(&q, 6, 1.5, 1.0, 0.6);
        let (_, s) = enclosing_cylinder(&body, &q, 16).unwrap();
        assert!(dot(s.l2.direction(), s.l3.direction()).abs() < 1e-9);
        assert!(dot(s.l1.direction(), s.l3.direction()).abs() < 1e-9);
        assert!(dot(s.l1.direction(), s.l2.direction()).abs() < 1e-9);
    }

    #[test]
    fn cylinder_margin_signs() {
        let c = CylinderSpec::upright(1.0, 0.5).unwrap();
        assert!(c.contains([0.5, 0.5, 0.2]));
        assert!(!c.contains([0.0, 0.0, 0.6]));
        assert!(!c.contains([1.1, 0.0, 0.0]));
        assert!(CylinderSpec::upright(0.0, 1.0).is_err());
    }
}
