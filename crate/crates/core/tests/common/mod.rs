//! Independent oracles and field builders shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use beltrami::convex_body::{SphereQuadrature, SupportBody};
use beltrami::grid::{rasterize, FaceField, VoxelDomain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton on the three-term recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            loop {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    (p0, p1) = (p1, ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k);
                }
                let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    let (mut q0, mut q1) = (1.0, x);
                    for k in 2..=n {
                        let k = k as f64;
                        (q0, q1) = (q1, ((2.0 * k - 1.0) * x * q1 - (k - 1.0) * q0) / k);
                    }
                    let dp = n as f64 * (x * q1 - q0) / (x * x - 1.0);
                    return (x, 2.0 / ((1.0 - x * x) * dp * dp));
                }
            }
        })
        .collect()
}

fn integrate(rule: &[(f64, f64)], a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    rule.iter().map(|(x, w)| w * half * f(mid + half * x)).sum()
}

/// `int_C |y|^-2 dy` over the cylinder of radius `r`, half-height `h` centred at the origin,
/// as a triple Gauss rule in spherical coordinates. The polar angle is split where the ray
/// leaves through the rim, so each panel is smooth.
pub fn cylinder_m_quadrature(r: f64, h: f64) -> f64 {
    let rule = gauss_legendre(48);
    let rim = (r / h).atan();
    let extent = |theta: f64| (r / theta.sin()).min(h / theta.cos().abs());
    let shell = |theta: f64| {
        // |y|^-2 cancels the radial Jacobian
        let radial = integrate(&rule, 0.0, extent(theta), |_| 1.0);
        integrate(&rule, 0.0, 2.0 * PI, |_| radial * theta.sin())
    };
    let panels = [(0.0, rim), (rim, PI - rim), (PI - rim, PI)];
    panels
        .iter()
        .map(|&(a, b)| integrate(&rule, a, b, shell))
        .sum()
}

/// Root of `tan x = x` in `(pi, 3 pi / 2)` by Newton from 4.5.
pub fn tan_root() -> f64 {
    let mut x: f64 = 4.5;
    for _ in 0..50 {
        let f = x.tan() - x;
        let df = x.tan().powi(2);
        x -= f / df;
    }
    x
}

pub fn quad() -> SphereQuadrature {
    SphereQuadrature::fibonacci(1024)
}

/// Random spheroid-like bodies at coarse resolution.
pub fn random_domain(seed: u64) -> VoxelDomain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = quad();
    let axes: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.6..1.4));
    let resolution = rng.random_range(10..15);
    let body = SupportBody::ellipsoid(&q, 4, axes[0], axes[1], axes[2]);
    rasterize(&body, &q, resolution).unwrap()
}

/// Uniform noise on interior and boundary faces; zero elsewhere.
pub fn random_field(domain: &VoxelDomain, rng: &mut impl Rng) -> FaceField {
    let mut f = FaceField::zeros(domain.grid());
    let v = f.as_mut_slice();
    for &face in domain.interior_faces() {
        v[face] = rng.random_range(-1.0..1.0);
    }
    for b in domain.boundary_faces() {
        v[b.face] = rng.random_range(-1.0..1.0);
    }
    f
}

pub fn random_potential(domain: &VoxelDomain, rng: &mut impl Rng) -> Vec<f64> {
    (0..domain.cell_count())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect()
}

/// Discrete curl of a random edge potential supported on edges whose four surrounding cells
/// are all occupied: exactly divergence free with no boundary flux.
pub fn random_curl(domain: &VoxelDomain, rng: &mut impl Rng) -> FaceField {
    let grid = *domain.grid();
    let n = grid.dims;
    let occupied = |ijk: [i64; 3]| {
        (0..3).all(|a| ijk[a] >= 0 && (ijk[a] as usize) < n[a])
            && domain.is_occupied(grid.cell_index(ijk.map(|v| v as usize)))
    };
    // edge of axis e at node ijk touches the cells ijk - {0,1} e_b - {0,1} e_c
    let inner_edge = |e: usize, ijk: [usize; 3]| {
        let (b, c) = ((e + 1) % 3, (e + 2) % 3);
        (0..4).all(|s| {
            let mut cell = ijk.map(|v| v as i64);
            cell[b] -= s & 1;
            cell[c] -= s >> 1;
            occupied(cell)
        })
    };
    let nodes = [n[0] + 1, n[1] + 1, n[2] + 1];
    let index =
        |e: usize, ijk: [usize; 3]| e + 3 * (ijk[0] + nodes[0] * (ijk[1] + nodes[1] * ijk[2]));
    let mut a = vec![0.0; 3 * nodes[0] * nodes[1] * nodes[2]];
    for k in 0..nodes[2] {
        for j in 0..nodes[1] {
            for i in 0..nodes[0] {
                for e in 0..3 {
                    if [i, j, k][e] < n[e] && inner_edge(e, [i, j, k]) {
                        a[index(e, [i, j, k])] = rng.random_range(-1.0..1.0);
                    }
                }
            }
        }
    }
    let mut f = FaceField::zeros(&grid);
    let inv_h = 1.0 / grid.spacing;
    for face in 0..grid.face_count() {
        let (axis, ijk) = grid.face_axis_ijk(face);
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        let shifted = |d: usize| {
            let mut s = ijk;
            s[d] += 1;
            s
        };
        let edge = |e: usize, at: [usize; 3]| {
            if (0..3).all(|x| at[x] < nodes[x]) && at[e] < n[e] {
                a[index(e, at)]
            } else {
                0.0
            }
        };
        let flux = (edge(c, shifted(b)) - edge(c, ijk)) - (edge(b, shifted(c)) - edge(b, ijk));
        f.as_mut_slice()[face] = flux * inv_h;
    }
    f
}

pub fn relative_gap(domain: &VoxelDomain, a: &FaceField, b: &FaceField) -> f64 {
    let mut d = a.clone();
    d.axpy(-1.0, b);
    domain.norm(&d) / domain.norm(b).max(f64::MIN_POSITIVE)
}
