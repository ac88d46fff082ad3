//! Discrete Leray projection onto divergence-free, tangent face fields.
//!
//! `P f = g - D^T (D D^T)^+ D g` where `g` is `f` with boundary faces zeroed and `D` the
//! divergence restricted to interior faces. `D D^T` is `1/h^2` times the graph Laplacian
//! of the occupied cells (pure Neumann), solved by conjugate gradients with a modified
//! incomplete Cholesky preconditioner in lattice order.

use super::{FaceField, VoxelDomain};
use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonOptions {
    pub rel_tol: f64,
    /// Iteration cap as a multiple of the occupied cell count.
    pub max_iter_factor: usize,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        PoissonOptions {
            rel_tol: 1e-10,
            max_iter_factor: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonReport {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// MIC(0) factor of the graph Laplacian, one inverse pivot per cell.
#[derive(Clone, Debug)]
pub(crate) struct Preconditioner {
    inv_pivot: Vec<f64>,
}

impl Preconditioner {
    pub(crate) fn new(domain: &VoxelDomain) -> Self {
        const TAU: f64 = 0.97;
        const SIGMA: f64 = 0.25;
        let nb = domain.neighbor_ranks();
        let n = nb.len();
        let mut inv_pivot = vec![0.0; n];
        let degree = |r: usize| nb[r].iter().filter(|x| **x != NONE).count() as f64;
        // off-diagonal entries are -1 wherever a neighbour exists
        let has = |r: usize, slot: usize| if nb[r][slot] != NONE { 1.0 } else { 0.0 };
        for r in 0..n {
            let diag = degree(r);
            let mut e = diag;
            for axis in 0..3 {
                let lower = nb[r][2 * axis];
                if lower == NONE {
                    continue;
                }
                let l = lower as usize;
                let p = inv_pivot[l];
                e -= p * p;
                let others: f64 = (0..3)
                    .filter(|b| *b != axis)
                    .map(|b| has(l, 2 * b + 1))
                    .sum();
                e -= TAU * others * p * p;
            }
            if e < SIGMA * diag {
                e = diag;
            }
            inv_pivot[r] = 1.0 / e.sqrt();
        }
        Preconditioner { inv_pivot }
    }

    fn apply(&self, domain: &VoxelDomain, r: &[f64], z: &mut [f64]) {
        let nb = domain.neighbor_ranks();
        let n = r.len();
        let mut q = vec![0.0; n];
        for c in 0..n {
            let mut t = r[c];
            for axis in 0..3 {
                let lower = nb[c][2 * axis];
                if lower != NONE {
                    let l = lower as usize;
                    t += self.inv_pivot[l] * q[l];
                }
            }
            q[c] = t * self.inv_pivot[c];
        }
        for c in (0..n).rev() {
            let mut t = q[c];
            for axis in 0..3 {
                let upper = nb[c][2 * axis + 1];
                if upper != NONE {
                    t += self.inv_pivot[c] * z[upper as usize];
                }
            }
            z[c] = t * self.inv_pivot[c];
        }
    }
}

fn laplacian(domain: &VoxelDomain, p: &[f64], out: &mut [f64]) {
    for (r, nb) in domain.neighbor_ranks().iter().enumerate() {
        let mut acc = 0.0;
        for n in nb {
            if *n != NONE {
                acc += p[r] - p[*n as usize];
            }
        }
        out[r] = acc;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves the graph-Laplacian system `L p = b` (with `sum b` projected out) by MIC(0)-PCG;
/// returns the zero-mean solution.
pub fn solve_neumann_poisson(
    domain: &VoxelDomain,
    rhs: &[f64],
    options: &PoissonOptions,
) -> Result<(Vec<f64>, PoissonReport)> {
    let pre = Preconditioner::new(domain);
    solve_with(domain, &pre, rhs, options)
}

pub(crate) fn solve_with(
    domain: &VoxelDomain,
    pre: &Preconditioner,
    rhs: &[f64],
    options: &PoissonOptions,
) -> Result<(Vec<f64>, PoissonReport)> {
    let n = rhs.len();
    let mean = rhs.iter().sum::<f64>() / n as f64;
    let b: Vec<f64> = rhs.iter().map(|v| v - mean).collect();
    let b_norm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((
            x,
            PoissonReport {
                iterations: 0,
                rel_residual: 0.0,
            },
        ));
    }
    let mut r = b.clone();
    let mut z = vec![0.0; n];
    pre.apply(domain, &r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let max_iter = options.max_iter_factor * n.max(1);
    let mut rel = 1.0;
    for it in 1..=max_iter {
        laplacian(domain, &p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / b_norm;
        if rel <= options.rel_tol {
            let mean = x.iter().sum::<f64>() / n as f64;
            x.iter_mut().for_each(|v| *v -= mean);
            return Ok((
                x,
                PoissonReport {
                    iterations: it,
                    rel_residual: rel,
                },
            ));
        }
        pre.apply(domain, &r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::PoissonNotConverged {
        iterations: max_iter,
        residual: rel,
    })
}

/// Projection of face fields onto the discrete `K(Omega)` with a cached preconditioner.
#[derive(Clone, Debug)]
pub(crate) struct LerayProjector {
    pre: Preconditioner,
    options: PoissonOptions,
}

impl LerayProjector {
    pub(crate) fn new(domain: &VoxelDomain, options: PoissonOptions) -> Self {
        LerayProjector {
            pre: Preconditioner::new(domain),
            options,
        }
    }

    pub(crate) fn project(&self, domain: &VoxelDomain, f: &FaceField) -> Result<FaceField> {
        let grid = domain.grid();
        let src = f.as_slice();
        let mut g = FaceField::zeros(grid);
        let out = g.as_mut_slice();
        for &face in domain.interior_faces() {
            out[face] = src[face];
        }
        // h^2 * D g, with D g = flux out of each cell / h
        let h = grid.spacing;
        let mut rhs = vec![0.0; domain.cell_count()];
        for &face in domain.interior_faces() {
            let (low, high) = grid.face_cells(face);
            let rl = domain.rank_of(low.expect("interior")).expect("occupied");
            let rh = domain.rank_of(high.expect("interior")).expect("occupied");
            rhs[rl] += h * out[face];
            rhs[rh] -= h * out[face];
        }
        let (p, _) = solve_with(domain, &self.pre, &rhs, &self.options)?;
        for &face in domain.interior_faces() {
            let (low, high) = grid.face_cells(face);
            let rl = domain.rank_of(low.expect("interior")).expect("occupied");
            let rh = domain.rank_of(high.expect("interior")).expect("occupied");
            out[face] -= (p[rl] - p[rh]) / h;
        }
        Ok(g)
    }
}

/// L2-orthogonal projection onto fields with zero boundary flux and zero discrete
/// divergence. Fails only when the Poisson solve stalls.
pub fn leray_project(domain: &VoxelDomain, f: &FaceField) -> Result<FaceField> {
    LerayProjector::new(domain, PoissonOptions::default()).project(domain, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex_body::{SphereQuadrature, SupportBody};
    use crate::grid::{discrete_divergence, discrete_gradient, rasterize};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(domain: &VoxelDomain, seed: u64) -> FaceField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = FaceField::zeros(domain.grid());
        for face in domain.interior_faces() {
            f.as_mut_slice()[*face] = rng.random_range(-1.0..1.0);
        }
        for b in domain.boundary_faces() {
            f.as_mut_slice()[b.face] = rng.random_range(-1.0..1.0);
        }
        f
    }

    fn domain() -> VoxelDomain {
        let q = SphereQuadrature::fibonacci(1024);
        rasterize(&SupportBody::ellipsoid(&q, 4, 1.0, 0.8, 1.3), &q, 14).unwrap()
    }

    #[test]
    fn output_is_divergence_free_and_tangent() {
        let d = domain();
        let f = random_field(&d, 1);
        let p = leray_project(&d, &f).unwrap();
        let scale = d.norm(&f);
        for div in discrete_divergence(&d, &p) {
            assert!(div.abs() * d.grid().cell_volume().sqrt() < 1e-8 * scale);
        }
        for b in d.boundary_faces() {
            assert_eq!(p.as_slice()[b.face], 0.0);
        }
    }

    #[test]
    fn kills_gradients() {
        let d = domain();
        let pot: Vec<f64> = d
            .cell_centers()
            .iter()
            .map(|x| (2.0 * x[0]).sin() + x[1] * x[2])
            .collect();
        let g = discrete_gradient(&d, &pot);
        let p = leray_project(&d, &g).unwrap();
        assert!(d.norm(&p) < 1e-9 * d.norm(&g));
    }

    #[test]
    fn idempotent() {
        let d = domain();
        let once = leray_project(&d, &random_field(&d, 2)).unwrap();
        let twice = leray_project(&d, &once).unwrap();
        let mut diff = twice.clone();
        diff.axpy(-1.0, &once);
        assert!(d.norm(&diff) <= 1e-9 * d.norm(&once));
    }

    #[test]
    fn poisson_zero_rhs_is_free() {
        let d = domain();
        let (p, rep) =
            solve_neumann_poisson(&d, &vec![0.0; d.cell_count()], &PoissonOptions::default())
                .unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(p.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let d = domain();
        let rhs: Vec<f64> = (0..d.cell_count())
            .map(|i| (i as f64 * 0.37).sin())
            .collect();
        let opts = PoissonOptions {
            rel_tol: 1e-30,
            max_iter_factor: 1,
        };
        match solve_neumann_poisson(&d, &rhs, &opts) {
            Err(Error::PoissonNotConverged { residual, .. }) => assert!(residual > 0.0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
