use super::{BoundaryFace, CellField, FaceField, VoxelDomain};
use crate::convex_body::dot;

/// Flux difference per occupied cell divided by the spacing; all six faces of the cell
/// contribute, boundary faces included.
pub fn discrete_divergence(domain: &VoxelDomain, f: &FaceField) -> Vec<f64> {
    let grid = domain.grid();
    let v = f.as_slice();
    let inv_h = 1.0 / grid.spacing;
    domain
        .cells()
        .iter()
        .map(|&c| {
            let ijk = grid.cell_ijk(c);
            let mut div = 0.0;
            for axis in 0..3 {
                let mut high = ijk;
                high[axis] += 1;
                div += v[grid.face_index(axis, high)] - v[grid.face_index(axis, ijk)];
            }
            div * inv_h
        })
        .collect()
}

/// Centred difference of a cell scalar (domain order) across interior faces; boundary
/// faces carry zero flux.
pub fn discrete_gradient(domain: &VoxelDomain, p: &[f64]) -> FaceField {
    let grid = domain.grid();
    let mut out = FaceField::zeros(grid);
    let inv_h = 1.0 / grid.spacing;
    let values = out.as_mut_slice();
    for &face in domain.interior_faces() {
        let (low, high) = grid.face_cells(face);
        let (low, high) = (low.expect("interior face"), high.expect("interior face"));
        let pl = p[domain.rank_of(low).expect("occupied")];
        let ph = p[domain.rank_of(high).expect("occupied")];
        values[face] = (ph - pl) * inv_h;
    }
    out
}

/// Average of the two opposing face values per component; boundary faces count as zero.
pub fn interpolate_to_cells(domain: &VoxelDomain, f: &FaceField) -> CellField {
    let grid = domain.grid();
    let neighbors = domain.neighbor_ranks();
    let v = f.as_slice();
    let values = domain
        .cells()
        .iter()
        .enumerate()
        .map(|(r, &c)| {
            let ijk = grid.cell_ijk(c);
            let mut out = [0.0; 3];
            for axis in 0..3 {
                let mut high = ijk;
                high[axis] += 1;
                let lo = if neighbors[r][2 * axis] != u32::MAX {
                    v[grid.face_index(axis, ijk)]
                } else {
                    0.0
                };
                let hi = if neighbors[r][2 * axis + 1] != u32::MAX {
                    v[grid.face_index(axis, high)]
                } else {
                    0.0
                };
                out[axis] = 0.5 * (lo + hi);
            }
            out
        })
        .collect();
    CellField::from_vec(values)
}

/// Adjoint of [`interpolate_to_cells`]: each interior face takes the mean of its two cells'
/// components along the face axis; boundary faces are zero.
pub fn restrict_to_faces(domain: &VoxelDomain, u: &CellField) -> FaceField {
    let grid = domain.grid();
    let mut out = FaceField::zeros(grid);
    let cells = u.as_slice();
    let values = out.as_mut_slice();
    for &face in domain.interior_faces() {
        let (axis, _) = grid.face_axis_ijk(face);
        let (low, high) = grid.face_cells(face);
        let rl = domain
            .rank_of(low.expect("interior face"))
            .expect("occupied");
        let rh = domain
            .rank_of(high.expect("interior face"))
            .expect("occupied");
        values[face] = 0.5 * (cells[rl][axis] + cells[rh][axis]);
    }
    out
}

/// One-sided trace of `|u|^2` per boundary face, from the adjacent occupied cell.
pub fn boundary_trace_sq(domain: &VoxelDomain, u: &CellField) -> Vec<f64> {
    let cells = u.as_slice();
    domain
        .boundary_faces()
        .iter()
        .map(|b| {
            let v = cells[domain.rank_of(b.cell).expect("boundary cell is occupied")];
            v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
        })
        .collect()
}

/// Tangential boundary value per boundary face: each component of the adjacent cell comes
/// from its interior faces only (the mean if both are interior, the single one otherwise),
/// then the part along the estimated normal is removed.
pub fn boundary_trace(domain: &VoxelDomain, f: &FaceField) -> Vec<[f64; 3]> {
    let grid = domain.grid();
    let neighbors = domain.neighbor_ranks();
    let v = f.as_slice();
    domain
        .boundary_faces()
        .iter()
        .map(|b| {
            let r = domain.rank_of(b.cell).expect("boundary cell is occupied");
            let ijk = grid.cell_ijk(b.cell);
            let mut u = [0.0; 3];
            for axis in 0..3 {
                let mut high = ijk;
                high[axis] += 1;
                let lo =
                    (neighbors[r][2 * axis] != u32::MAX).then(|| v[grid.face_index(axis, ijk)]);
                let hi = (neighbors[r][2 * axis + 1] != u32::MAX)
                    .then(|| v[grid.face_index(axis, high)]);
                u[axis] = match (lo, hi) {
                    (Some(a), Some(c)) => 0.5 * (a + c),
                    (Some(a), None) | (None, Some(a)) => a,
                    (None, None) => 0.0,
                };
            }
            let un = dot(u, b.normal);
            [
                u[0] - un * b.normal[0],
                u[1] - un * b.normal[1],
                u[2] - un * b.normal[2],
            ]
        })
        .collect()
}

/// Surface-measure weights of the staircase: `h^2 |N . e_face|`, so that summing over the
/// three face orientations recovers `dS` of the smooth boundary with normal `N`.
pub fn boundary_face_weights(domain: &VoxelDomain) -> Vec<f64> {
    let h2 = domain.spacing() * domain.spacing();
    domain
        .boundary_faces()
        .iter()
        .map(|b| h2 * face_alignment(b))
        .collect()
}

fn face_alignment(b: &BoundaryFace) -> f64 {
    let mut e = [0.0; 3];
    e[b.axis] = b.outward;
    dot(b.normal, e).abs()
}

/// `sum_faces values * weight` with [`boundary_face_weights`].
pub fn boundary_integral(domain: &VoxelDomain, values: &[f64]) -> f64 {
    boundary_face_weights(domain)
        .iter()
        .zip(values)
        .map(|(w, v)| w * v)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex_body::{SphereQuadrature, SupportBody};
    use crate::grid::{rasterize, rasterize_fn, GridSpec};

    fn ball_domain(res: usize) -> VoxelDomain {
        rasterize(
            &SupportBody::ball(1.0),
            &SphereQuadrature::fibonacci(1024),
            res,
        )
        .unwrap()
    }

    fn interior_cells(domain: &VoxelDomain) -> Vec<usize> {
        domain
            .neighbor_ranks()
            .iter()
            .enumerate()
            .filter(|(_, nb)| nb.iter().all(|n| *n != u32::MAX))
            .map(|(r, _)| r)
            .collect()
    }

    #[test]
    fn gradient_of_linear_is_divergence_free_inside() {
        let d = ball_domain(16);
        let p: Vec<f64> = d.cell_centers().iter().map(|x| 2.0 * x[0] - x[2]).collect();
        let div = discrete_divergence(&d, &discrete_gradient(&d, &p));
        for r in interior_cells(&d) {
            let ijk = d.grid().cell_ijk(d.cells()[r]);
            // second neighbours also inside, so both adjacent faces are interior
            let deep = d.neighbor_ranks()[r].iter().all(|n| {
                d.neighbor_ranks()[*n as usize]
                    .iter()
                    .all(|m| *m != u32::MAX)
            });
            if deep {
                assert!(div[r].abs() < 1e-12, "{ijk:?} {}", div[r]);
            }
        }
    }

    #[test]
    fn gradient_of_quadratic_has_divergence_three() {
        let d = ball_domain(16);
        let p: Vec<f64> = d
            .cell_centers()
            .iter()
            .map(|x| 0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]))
            .collect();
        let div = discrete_divergence(&d, &discrete_gradient(&d, &p));
        for r in interior_cells(&d) {
            assert!((div[r] - 3.0).abs() < 1e-10, "{}", div[r]);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let d = ball_domain(12);
        let z = FaceField::zeros(d.grid());
        assert!(discrete_divergence(&d, &z).iter().all(|v| *v == 0.0));
        assert!(interpolate_to_cells(&d, &z).sum_sq() == 0.0);
        assert!(boundary_trace_sq(&d, &CellField::zeros(d.cell_count()))
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn linear_field_interpolates_exactly_inside() {
        let d = ball_domain(16);
        let f = FaceField::sample(d.grid(), |x| [1.0 + x[1], -2.0 * x[2], 0.5 * x[0]]);
        let u = interpolate_to_cells(&d, &f);
        let centers = d.cell_centers();
        for r in interior_cells(&d) {
            let x = centers[r];
            let expect = [1.0 + x[1], -2.0 * x[2], 0.5 * x[0]];
            for a in 0..3 {
                assert!((u.as_slice()[r][a] - expect[a]).abs() < 1e-12);
            }
        }
        let c = interpolate_to_cells(&d, &FaceField::sample(d.grid(), |_| [0.3, -0.1, 2.0]));
        for r in interior_cells(&d) {
            assert_eq!(c.as_slice()[r], [0.3, -0.1, 2.0]);
        }
    }

    #[test]
    fn restriction_is_adjoint_of_interpolation() {
        let d = ball_domain(12);
        let f = FaceField::sample(d.grid(), |x| [x[0].sin(), (x[1] * 3.0).cos(), x[2] * x[0]]);
        let u = crate::grid::CellField::from_vec(
            d.cell_centers()
                .iter()
                .map(|x| [x[2], x[0] * x[1], 1.0 - x[0]])
                .collect(),
        );
        let lhs: f64 = interpolate_to_cells(&d, &f)
            .as_slice()
            .iter()
            .zip(u.as_slice())
            .map(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
            .sum();
        let rhs = crate::grid::dot_slices(f.as_slice(), restrict_to_faces(&d, &u).as_slice());
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn constant_norm_field_has_constant_trace() {
        let d = ball_domain(12);
        let u = CellField::from_vec(vec![[0.6, 0.0, 0.8]; d.cell_count()]);
        assert!(boundary_trace_sq(&d, &u)
            .iter()
            .all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn position_trace_on_ball_approaches_one() {
        let mut errors = Vec::new();
        for res in [16, 32] {
            let d = ball_domain(res);
            let u = CellField::from_vec(d.cell_centers());
            let t = boundary_trace_sq(&d, &u);
            let w = boundary_face_weights(&d);
            let area: f64 = w.iter().sum();
            let mean = boundary_integral(&d, &t) / area;
            errors.push((mean - 1.0).abs());
        }
        assert!(errors[1] < errors[0], "{errors:?}");
        assert!(errors[1] < 0.1);
    }

    #[test]
    fn weights_recover_sphere_area() {
        let d = ball_domain(32);
        let area: f64 = boundary_face_weights(&d).iter().sum();
        assert!(
            (area / (4.0 * std::f64::consts::PI) - 1.0).abs() < 0.05,
            "{area}"
        );
    }

    #[test]
    fn cube_trace_faces() {
        let grid = GridSpec::covering([0.0; 3], [3.0; 3], 1.0);
        let d = rasterize_fn(grid, |x| x.iter().all(|v| *v > 1.0 && *v < 2.0)).unwrap();
        assert_eq!(boundary_face_weights(&d), vec![1.0; 6]);
    }
}
