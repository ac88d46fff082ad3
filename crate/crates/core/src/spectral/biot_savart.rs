//! Midpoint-rule Biot-Savart sum over occupied cells.
//!
//! `(B u)(x) = h^3/(4 pi) sum_y u(y) x (x - y)/|x - y|^3` with the self term dropped. The sum
//! is a discrete convolution on the lattice, evaluated exactly (up to rounding) by
//! zero-padded FFTs; [`biot_savart_direct`] is the plain double loop.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::grid::{CellField, GridSpec, VoxelDomain};

/// Kernel `r h^3 / (4 pi |r|^3)` at lattice displacement `d` (in cells), zero at `d = 0`.
fn kernel(d: [i64; 3], spacing: f64) -> [f64; 3] {
    let r2 = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64;
    if r2 == 0.0 {
        return [0.0; 3];
    }
    let s = spacing / (4.0 * std::f64::consts::PI * r2 * r2.sqrt());
    [d[0] as f64 * s, d[1] as f64 * s, d[2] as f64 * s]
}

/// O(N^2) reference evaluation.
pub fn biot_savart_direct(domain: &VoxelDomain, u: &CellField) -> CellField {
    let grid = domain.grid();
    let ijk: Vec<[i64; 3]> = domain
        .cells()
        .iter()
        .map(|&c| grid.cell_ijk(c).map(|v| v as i64))
        .collect();
    let src = u.as_slice();
    let out = ijk
        .par_iter()
        .map(|x| {
            let mut acc = [0.0; 3];
            for (y, v) in ijk.iter().zip(src) {
                let k = kernel([x[0] - y[0], x[1] - y[1], x[2] - y[2]], grid.spacing);
                acc[0] += v[1] * k[2] - v[2] * k[1];
                acc[1] += v[2] * k[0] - v[0] * k[2];
                acc[2] += v[0] * k[1] - v[1] * k[0];
            }
            acc
        })
        .collect();
    CellField::from_vec(out)
}

/// In-place 3D FFT on an x-fastest array. Inputs supported in the low `support` corner skip
/// the all-zero lines of the first passes; truncated inverses skip lines whose outputs
/// fall outside that corner.
struct Fft3 {
    dims: [usize; 3],
    support: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    fn new(dims: [usize; 3], support: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 {
            dims,
            support,
            forward: dims.map(|n| planner.plan_fft_forward(n)),
            inverse: dims.map(|n| planner.plan_fft_inverse(n)),
        }
    }

    fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    fn pass_x(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>, jmax: usize, kmax: usize) {
        let [n0, n1, _] = self.dims;
        data.par_chunks_mut(n0 * n1).take(kmax).for_each(|slab| {
            plan.process(&mut slab[..n0 * jmax]);
        });
    }

    fn pass_y(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>, kmax: usize) {
        let [n0, n1, _] = self.dims;
        data.par_chunks_mut(n0 * n1).take(kmax).for_each(|slab| {
            let mut line = vec![Complex64::default(); n1];
            for i in 0..n0 {
                for j in 0..n1 {
                    line[j] = slab[i + n0 * j];
                }
                plan.process(&mut line);
                for j in 0..n1 {
                    slab[i + n0 * j] = line[j];
                }
            }
        });
    }

    fn pass_z(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let [n0, n1, n2] = self.dims;
        let plane = n0 * n1;
        let mut scratch = vec![Complex64::default(); data.len()];
        for k in 0..n2 {
            for p in 0..plane {
                scratch[p * n2 + k] = data[k * plane + p];
            }
        }
        scratch
            .par_chunks_mut(n2)
            .for_each(|line| plan.process(line));
        for k in 0..n2 {
            for p in 0..plane {
                data[k * plane + p] = scratch[p * n2 + k];
            }
        }
    }

    fn forward_full(&self, data: &mut [Complex64]) {
        self.pass_x(data, &self.forward[0], self.dims[1], self.dims[2]);
        self.pass_y(data, &self.forward[1], self.dims[2]);
        self.pass_z(data, &self.forward[2]);
    }

    /// Forward transform of data that vanishes outside the support corner.
    fn forward_supported(&self, data: &mut [Complex64]) {
        self.pass_x(data, &self.forward[0], self.support[1], self.support[2]);
        self.pass_y(data, &self.forward[1], self.support[2]);
        self.pass_z(data, &self.forward[2]);
    }

    /// Unnormalized inverse, exact only inside the support corner.
    fn inverse_truncated(&self, data: &mut [Complex64]) {
        self.pass_z(data, &self.inverse[2]);
        self.pass_y(data, &self.inverse[1], self.support[2]);
        self.pass_x(data, &self.inverse[0], self.support[1], self.support[2]);
    }
}

/// FFT convolution plan for one grid: the transformed kernel combinations are cached.
pub struct BiotSavart {
    grid: GridSpec,
    fft: Fft3,
    /// `FFT(K_z)`, `FFT(K_x) + i FFT(K_y)`, `FFT(K_y) + i FFT(K_x)`
    kz: Vec<Complex64>,
    kxy: Vec<Complex64>,
    kyx: Vec<Complex64>,
}

impl std::fmt::Debug for BiotSavart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BiotSavart")
            .field("grid", &self.grid)
            .field("padded", &self.fft.dims)
            .finish()
    }
}

impl BiotSavart {
    pub fn new(grid: &GridSpec) -> Self {
        let padded = grid.dims.map(|n| 2 * n);
        let fft = Fft3::new(padded, grid.dims);
        let len = fft.len();
        let mut comps = [
            vec![Complex64::default(); len],
            vec![Complex64::default(); len],
            vec![Complex64::default(); len],
        ];
        for k in 0..padded[2] {
            for j in 0..padded[1] {
                for i in 0..padded[0] {
                    let wrap = |v: usize, n: usize| {
                        if v < n {
                            v as i64
                        } else {
                            v as i64 - 2 * n as i64
                        }
                    };
                    let d = [
                        wrap(i, grid.dims[0]),
                        wrap(j, grid.dims[1]),
                        wrap(k, grid.dims[2]),
                    ];
                    let kv = kernel(d, grid.spacing);
                    let idx = i + padded[0] * (j + padded[1] * k);
                    for a in 0..3 {
                        comps[a][idx] = Complex64::new(kv[a], 0.0);
                    }
                }
            }
        }
        for c in comps.iter_mut() {
            fft.forward_full(c);
        }
        let i = Complex64::i();
        let [kx, ky, kz] = comps;
        let kxy = kx.iter().zip(&ky).map(|(x, y)| x + i * y).collect();
        let kyx = kx.iter().zip(&ky).map(|(x, y)| y + i * x).collect();
        BiotSavart {
            grid: *grid,
            fft,
            kz,
            kxy,
            kyx,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Applies the sum to a cell field of `domain`, whose grid must be this plan's grid.
    pub fn apply(&self, domain: &VoxelDomain, u: &CellField) -> CellField {
        assert_eq!(domain.grid(), &self.grid, "plan built for a different grid");
        let p = self.fft.dims;
        let len = self.fft.len();
        let index = |c: usize| {
            let ijk = self.grid.cell_ijk(c);
            ijk[0] + p[0] * (ijk[1] + p[1] * ijk[2])
        };
        // a = u_x + i u_y, z = u_z
        let mut a = vec![Complex64::default(); len];
        let mut z = vec![Complex64::default(); len];
        for (&c, v) in domain.cells().iter().zip(u.as_slice()) {
            let idx = index(c);
            a[idx] = Complex64::new(v[0], v[1]);
            z[idx] = Complex64::new(v[2], 0.0);
        }
        self.fft.forward_supported(&mut a);
        self.fft.forward_supported(&mut z);
        let i = Complex64::i();
        // F(B_x + i B_y) = -i K_z A + i (K_x + i K_y) U_z ;  B_z = Re F^-1(A (K_y + i K_x))
        for n in 0..len {
            let xy = -i * self.kz[n] * a[n] + i * self.kxy[n] * z[n];
            z[n] = a[n] * self.kyx[n];
            a[n] = xy;
        }
        self.fft.inverse_truncated(&mut a);
        self.fft.inverse_truncated(&mut z);
        let scale = 1.0 / len as f64;
        let out = domain
            .cells()
            .iter()
            .map(|&c| {
                let idx = index(c);
                [a[idx].re * scale, a[idx].im * scale, z[idx].re * scale]
            })
            .collect();
        CellField::from_vec(out)
    }
}

/// One-shot FFT evaluation; build a [`BiotSavart`] plan to reuse the kernel transform.
pub fn biot_savart_apply(domain: &VoxelDomain, u: &CellField) -> CellField {
    BiotSavart::new(domain.grid()).apply(domain, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::rasterize_fn;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob() -> VoxelDomain {
        let grid = GridSpec::covering([-1.0, -0.8, -0.6], [1.0, 0.8, 0.6], 0.2);
        rasterize_fn(grid, |x| {
            x[0] * x[0] + 1.4 * x[1] * x[1] + 2.0 * x[2] * x[2] < 0.9
        })
        .unwrap()
    }

    #[test]
    fn single_source_matches_kernel() {
        let grid = GridSpec::covering([0.0; 3], [0.5, 0.1, 0.1], 0.1);
        let d = rasterize_fn(grid, |_| true).unwrap();
        let mut u = CellField::zeros(d.cell_count());
        u.as_mut_slice()[0] = [0.0, 0.0, 1.0];
        let b = biot_savart_apply(&d, &u);
        let h = 0.1;
        for (r, &c) in d.cells().iter().enumerate() {
            let dist = grid.cell_ijk(c)[0] as f64 * h;
            let expect = if r == 0 {
                0.0
            } else {
                h.powi(3) / (4.0 * std::f64::consts::PI * dist * dist)
            };
            let v = b.as_slice()[r];
            assert!(v[0].abs() < 1e-15 && v[2].abs() < 1e-15);
            assert!(
                (v[1] - expect).abs() < 1e-13 * expect.max(1e-3),
                "{r} {v:?} {expect}"
            );
        }
    }

    #[test]
    fn fft_matches_direct_sum() {
        let d = blob();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = CellField::from_vec(
            (0..d.cell_count())
                .map(|_| [0; 3].map(|_| rng.random_range(-1.0..1.0)))
                .collect(),
        );
        let fast = biot_savart_apply(&d, &u);
        let slow = biot_savart_direct(&d, &u);
        let scale = slow.sum_sq().sqrt();
        for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let d = blob();
        assert_eq!(
            biot_savart_apply(&d, &CellField::zeros(d.cell_count())).sum_sq(),
            0.0
        );
    }

    #[test]
    fn sum_is_symmetric() {
        let d = blob();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut field = || {
            CellField::from_vec(
                (0..d.cell_count())
                    .map(|_| [0; 3].map(|_| rng.random_range(-1.0..1.0)))
                    .collect(),
            )
        };
        let (u, v) = (field(), field());
        let dot = |a: &CellField, b: &CellField| -> f64 {
            a.as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(x, y)| x[0] * y[0] + x[1] * y[1] + x[2] * y[2])
                .sum()
        };
        let lhs = dot(&biot_savart_apply(&d, &u), &v);
        let rhs = dot(&u, &biot_savart_apply(&d, &v));
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1e-3));
    }
}
