//! Staggered voxel grids: rasterization, face/cell fields and the discrete Leray projection.
//!
//! Unknowns live on cell faces as normal components (MAC layout). A face field belongs to
//! the discrete analogue of `K(Omega)` when it vanishes on boundary faces and has zero
//! discrete divergence in every occupied cell.

mod bfld;
mod field;
pub(crate) mod leray;
mod ops;

pub use bfld::{read_bfld, write_bfld, BfldHeader};
pub use field::{CellField, FaceField};
pub use leray::{leray_project, solve_neumann_poisson, PoissonOptions, PoissonReport};
pub use ops::{
    boundary_face_weights, boundary_integral, boundary_trace, boundary_trace_sq,
    discrete_divergence, discrete_gradient, interpolate_to_cells, restrict_to_faces,
};

use std::collections::VecDeque;

use crate::convex_body::{dot, normalize, CylinderSpec, SphereQuadrature, SupportBody};
use crate::error::{Error, Result};

/// Lattice-aligned box of cubic cells: cell `(i, j, k)` spans
/// `origin + spacing * [i, i+1] x [j, j+1] x [k, k+1]`, and `origin` is an integer multiple
/// of `spacing`, so grids of the same spacing share one global lattice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub spacing: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    /// Smallest lattice-aligned grid of the given spacing covering `[lo, hi]`.
    pub fn covering(lo: [f64; 3], hi: [f64; 3], spacing: f64) -> Self {
        let mut origin = [0.0; 3];
        let mut dims = [0; 3];
        for a in 0..3 {
            let i0 = (lo[a] / spacing).floor();
            let i1 = (hi[a] / spacing).ceil();
            origin[a] = i0 * spacing;
            dims[a] = ((i1 - i0) as usize).max(1);
        }
        GridSpec {
            origin,
            spacing,
            dims,
        }
    }

    /// Grid whose longest bounding-box edge holds `resolution` cells.
    pub fn for_body(body: &SupportBody, resolution: usize) -> Self {
        let (lo, hi) = body.bounding_box();
        let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        Self::covering(lo, hi, extent / resolution as f64)
    }

    pub fn for_body_with_spacing(body: &SupportBody, spacing: f64) -> Self {
        let (lo, hi) = body.bounding_box();
        Self::covering(lo, hi, spacing)
    }

    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    pub fn cell_index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.dims[0] * (ijk[1] + self.dims[1] * ijk[2])
    }

    pub fn cell_ijk(&self, c: usize) -> [usize; 3] {
        let i = c % self.dims[0];
        let j = (c / self.dims[0]) % self.dims[1];
        let k = c / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn cell_center(&self, c: usize) -> [f64; 3] {
        let ijk = self.cell_ijk(c);
        [0, 1, 2].map(|a| self.origin[a] + (ijk[a] as f64 + 0.5) * self.spacing)
    }

    fn axis_face_dims(&self, axis: usize) -> [usize; 3] {
        let mut d = self.dims;
        d[axis] += 1;
        d
    }

    fn axis_face_count(&self, axis: usize) -> usize {
        let d = self.axis_face_dims(axis);
        d[0] * d[1] * d[2]
    }

    fn axis_offset(&self, axis: usize) -> usize {
        (0..axis).map(|a| self.axis_face_count(a)).sum()
    }

    pub fn face_count(&self) -> usize {
        (0..3).map(|a| self.axis_face_count(a)).sum()
    }

    /// Face normal to `axis` on the low side of cell `ijk` (`ijk[axis]` may equal `dims[axis]`).
    pub fn face_index(&self, axis: usize, ijk: [usize; 3]) -> usize {
        let d = self.axis_face_dims(axis);
        self.axis_offset(axis) + ijk[0] + d[0] * (ijk[1] + d[1] * ijk[2])
    }

    pub fn face_axis_ijk(&self, f: usize) -> (usize, [usize; 3]) {
        let mut rest = f;
        for axis in 0..3 {
            let n = self.axis_face_count(axis);
            if rest < n {
                let d = self.axis_face_dims(axis);
                return (
                    axis,
                    [rest % d[0], (rest / d[0]) % d[1], rest / (d[0] * d[1])],
                );
            }
            rest -= n;
        }
        panic!("face index {f} out of range");
    }

    pub fn face_center(&self, f: usize) -> [f64; 3] {
        let (axis, ijk) = self.face_axis_ijk(f);
        [0, 1, 2].map(|a| {
            let shift = if a == axis { 0.0 } else { 0.5 };
            self.origin[a] + (ijk[a] as f64 + shift) * self.spacing
        })
    }

    /// Cells on the low and high side of a face, when inside the grid.
    pub fn face_cells(&self, f: usize) -> (Option<usize>, Option<usize>) {
        let (axis, ijk) = self.face_axis_ijk(f);
        let low = (ijk[axis] > 0).then(|| {
            let mut l = ijk;
            l[axis] -= 1;
            self.cell_index(l)
        });
        let high = (ijk[axis] < self.dims[axis]).then(|| self.cell_index(ijk));
        (low, high)
    }
}

/// Face between an occupied cell and an unoccupied cell (or the grid edge).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryFace {
    pub face: usize,
    pub axis: usize,
    /// Occupied cell (grid index) adjacent to the face.
    pub cell: usize,
    /// `+1` when the face is on the high side of `cell`, `-1` otherwise.
    pub outward: f64,
    /// Estimated outward unit normal of the underlying smooth boundary.
    pub normal: [f64; 3],
}

const NO_CELL: u32 = u32::MAX;

/// Rasterized domain on a [`GridSpec`]: a 6-connected set of occupied cells.
#[derive(Clone, Debug)]
pub struct VoxelDomain {
    grid: GridSpec,
    occupied: Vec<bool>,
    cells: Vec<usize>,
    rank: Vec<u32>,
    /// Per occupied cell: ranks of the `-x, +x, -y, +y, -z, +z` neighbours.
    neighbors: Vec<[u32; 6]>,
    interior_faces: Vec<usize>,
    boundary_faces: Vec<BoundaryFace>,
}

impl VoxelDomain {
    /// Keeps the largest 6-connected component of `occupied` (ties: lowest cell index).
    /// `normal_at` estimates the outward boundary normal near a boundary-face centre.
    pub fn from_occupancy(
        grid: GridSpec,
        occupied: Vec<bool>,
        normal_at: &dyn Fn([f64; 3], usize, f64) -> [f64; 3],
    ) -> Result<Self> {
        assert_eq!(occupied.len(), grid.cell_count());
        let occupied = largest_component(&grid, &occupied);
        let cells: Vec<usize> = (0..grid.cell_count()).filter(|c| occupied[*c]).collect();
        if cells.is_empty() {
            return Err(Error::EmptyDomain(format!(
                "no cell centre of the {:?} grid (spacing {:.4e}) lies inside the body",
                grid.dims, grid.spacing
            )));
        }
        let mut rank = vec![NO_CELL; grid.cell_count()];
        for (r, c) in cells.iter().enumerate() {
            rank[*c] = r as u32;
        }
        let mut neighbors = Vec::with_capacity(cells.len());
        let mut interior_faces = Vec::new();
        let mut boundary_faces = Vec::new();
        for &c in &cells {
            let ijk = grid.cell_ijk(c);
            let mut nb = [NO_CELL; 6];
            for axis in 0..3 {
                for (side, high) in [(0usize, false), (1usize, true)] {
                    let mut n = ijk;
                    let inside = if high {
                        n[axis] += 1;
                        n[axis] < grid.dims[axis]
                    } else if n[axis] > 0 {
                        n[axis] -= 1;
                        true
                    } else {
                        false
                    };
                    let neighbor = if inside {
                        rank[grid.cell_index(n)]
                    } else {
                        NO_CELL
                    };
                    nb[2 * axis + side] = neighbor;
                    let mut fijk = ijk;
                    if high {
                        fijk[axis] += 1;
                    }
                    let face = grid.face_index(axis, fijk);
                    if neighbor == NO_CELL {
                        let outward = if high { 1.0 } else { -1.0 };
                        let center = grid.face_center(face);
                        boundary_faces.push(BoundaryFace {
                            face,
                            axis,
                            cell: c,
                            outward,
                            normal: normal_at(center, axis, outward),
                        });
                    } else if high {
                        interior_faces.push(face);
                    }
                }
            }
            neighbors.push(nb);
        }
        interior_faces.sort_unstable();
        boundary_faces.sort_by_key(|b| b.face);
        Ok(VoxelDomain {
            grid,
            occupied,
            cells,
            rank,
            neighbors,
            interior_faces,
            boundary_faces,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing
    }

    pub fn is_occupied(&self, c: usize) -> bool {
        self.occupied[c]
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupied
    }

    /// Occupied grid cells in ascending order.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Position of grid cell `c` in [`Self::cells`].
    pub fn rank_of(&self, c: usize) -> Option<usize> {
        let r = self.rank[c];
        (r != NO_CELL).then_some(r as usize)
    }

    pub(crate) fn neighbor_ranks(&self) -> &[[u32; 6]] {
        &self.neighbors
    }

    pub fn interior_faces(&self) -> &[usize] {
        &self.interior_faces
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn volume(&self) -> f64 {
        self.cells.len() as f64 * self.grid.cell_volume()
    }

    /// Discrete L2 inner product of face fields (each face carries one cell volume).
    pub fn inner(&self, a: &FaceField, b: &FaceField) -> f64 {
        dot_slices(a.as_slice(), b.as_slice()) * self.grid.cell_volume()
    }

    pub fn norm(&self, a: &FaceField) -> f64 {
        self.inner(a, a).sqrt()
    }

    /// True when every occupied cell of `self` is occupied in `other` on the same grid.
    pub fn is_subset_of(&self, other: &VoxelDomain) -> bool {
        self.grid == other.grid && self.cells.iter().all(|c| other.occupied[*c])
    }

    /// Occupied-cell centres.
    pub fn cell_centers(&self) -> Vec<[f64; 3]> {
        self.cells
            .iter()
            .map(|c| self.grid.cell_center(*c))
            .collect()
    }
}

pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn largest_component(grid: &GridSpec, occupied: &[bool]) -> Vec<bool> {
    let mut label = vec![0u32; occupied.len()];
    let mut best: (usize, u32) = (0, 0);
    let mut next = 1u32;
    let mut queue = VecDeque::new();
    for start in 0..occupied.len() {
        if !occupied[start] || label[start] != 0 {
            continue;
        }
        let mut size = 0;
        label[start] = next;
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            size += 1;
            let ijk = grid.cell_ijk(c);
            for axis in 0..3 {
                for delta in [-1i64, 1] {
                    let n = ijk[axis] as i64 + delta;
                    if n < 0 || n >= grid.dims[axis] as i64 {
                        continue;
                    }
                    let mut nijk = ijk;
                    nijk[axis] = n as usize;
                    let nc = grid.cell_index(nijk);
                    if occupied[nc] && label[nc] == 0 {
                        label[nc] = next;
                        queue.push_back(nc);
                    }
                }
            }
        }
        if size > best.0 {
            best = (size, next);
        }
        next += 1;
    }
    label.iter().map(|l| *l != 0 && *l == best.1).collect()
}

fn axis_normal(axis: usize, outward: f64) -> [f64; 3] {
    let mut n = [0.0; 3];
    n[axis] = outward;
    n
}

/// Rasterizes a support body on an explicit grid: a cell is occupied when its centre
/// satisfies every supporting half-space of the direction rule.
pub fn rasterize_on(
    body: &SupportBody,
    quad: &SphereQuadrature,
    grid: GridSpec,
) -> Result<VoxelDomain> {
    let poly = body.polytope(quad);
    let occupied: Vec<bool> = (0..grid.cell_count())
        .map(|c| poly.contains(grid.cell_center(c)))
        .collect();
    let normal_at = |x: [f64; 3], _axis: usize, _outward: f64| poly.normals[poly.excess(x).1];
    VoxelDomain::from_occupancy(grid, occupied, &normal_at)
}

/// Rasterizes with `resolution` cells across the longest bounding-box edge.
pub fn rasterize(
    body: &SupportBody,
    quad: &SphereQuadrature,
    resolution: usize,
) -> Result<VoxelDomain> {
    if resolution < 8 {
        return Err(Error::InvalidInput(format!(
            "resolution must be at least 8, got {resolution}"
        )));
    }
    rasterize_on(body, quad, GridSpec::for_body(body, resolution))
}

/// Grid for a cylinder with `resolution` cells across its longest bounding-box edge.
pub fn cylinder_grid(spec: &CylinderSpec, resolution: usize) -> GridSpec {
    let (lo, hi) = cylinder_bounds(spec);
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    GridSpec::covering(lo, hi, extent / resolution as f64)
}

fn cylinder_bounds(spec: &CylinderSpec) -> ([f64; 3], [f64; 3]) {
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for a in 0..3 {
        let along = spec.axis[a].abs() * spec.half_height;
        let across = spec.radius * (1.0 - spec.axis[a] * spec.axis[a]).max(0.0).sqrt();
        lo[a] = spec.center[a] - along - across;
        hi[a] = spec.center[a] + along + across;
    }
    (lo, hi)
}

pub fn rasterize_cylinder_on(spec: &CylinderSpec, grid: GridSpec) -> Result<VoxelDomain> {
    let occupied: Vec<bool> = (0..grid.cell_count())
        .map(|c| spec.contains(grid.cell_center(c)))
        .collect();
    let normal_at = |x: [f64; 3], axis: usize, outward: f64| {
        let r = [0, 1, 2].map(|a| x[a] - spec.center[a]);
        let axial = dot(r, spec.axis);
        let radial = [0, 1, 2].map(|a| r[a] - axial * spec.axis[a]);
        let radial_len = dot(radial, radial).sqrt();
        let cap_gap = spec.half_height - axial.abs();
        let side_gap = spec.radius - radial_len;
        if cap_gap < side_gap {
            spec.axis.map(|v| v * axial.signum())
        } else if radial_len > 0.0 {
            normalize(radial)
        } else {
            axis_normal(axis, outward)
        }
    };
    VoxelDomain::from_occupancy(grid, occupied, &normal_at)
}

/// Rasterizes a cylinder with the exact membership test.
pub fn rasterize_cylinder(spec: &CylinderSpec, resolution: usize) -> Result<VoxelDomain> {
    if resolution < 8 {
        return Err(Error::InvalidInput(format!(
            "resolution must be at least 8, got {resolution}"
        )));
    }
    rasterize_cylinder_on(spec, cylinder_grid(spec, resolution))
}

/// Domain from an arbitrary membership test, with face-axis normals.
pub fn rasterize_fn(grid: GridSpec, inside: impl Fn([f64; 3]) -> bool) -> Result<VoxelDomain> {
    let occupied: Vec<bool> = (0..grid.cell_count())
        .map(|c| inside(grid.cell_center(c)))
        .collect();
    VoxelDomain::from_occupancy(grid, occupied, &|_, axis, outward| {
        axis_normal(axis, outward)
    })
}
