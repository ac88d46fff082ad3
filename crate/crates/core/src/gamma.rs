//! Operator distance between subdomains of a fixed box.
//!
//! For `Omega` inside the box `D`, `~BS_Omega = P_Omega B P_Omega` extended by zero to `D`.
//! All subdomains share the box grid and its convolution plan, so the operators act on one
//! face space and their difference is an honest matrix difference. Distances are relative to
//! that grid.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{rasterize_fn, FaceField, GridSpec, VoxelDomain};
use crate::rng::SeedTree;
use crate::spectral::{
    extreme_eigs, extreme_eigs_op, magnitude_order, BiotSavart, EigenOptions, LinearOperator,
    OperatorHandle,
};

/// The containing domain with its shared convolution plan.
#[derive(Debug)]
pub struct BoxDomain {
    domain: VoxelDomain,
    plan: Arc<BiotSavart>,
}

impl BoxDomain {
    /// The cube `[-a, a]^3` with `resolution` cells per edge.
    pub fn cube(half_width: f64, resolution: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) || resolution < 4 {
            return Err(Error::InvalidInput(format!(
                "box needs a positive half-width and at least 4 cells, got {half_width}, {resolution}"
            )));
        }
        let spacing = 2.0 * half_width / resolution as f64;
        let grid = GridSpec::covering([-half_width; 3], [half_width; 3], spacing);
        Self::from_domain(rasterize_fn(grid, |_| true)?)
    }

    pub fn from_domain(domain: VoxelDomain) -> Result<Self> {
        let plan = Arc::new(BiotSavart::new(domain.grid()));
        Ok(BoxDomain { domain, plan })
    }

    pub fn domain(&self) -> &VoxelDomain {
        &self.domain
    }

    pub fn grid(&self) -> &GridSpec {
        self.domain.grid()
    }

    pub fn spacing(&self) -> f64 {
        self.domain.spacing()
    }

    /// Cells of the box whose centres satisfy `inside`.
    pub fn subdomain(&self, inside: impl Fn([f64; 3]) -> bool) -> Result<VoxelDomain> {
        let sub = rasterize_fn(*self.grid(), |x| {
            self.domain.is_occupied(cell_of(self.grid(), x)) && inside(x)
        })?;
        Ok(sub)
    }

    /// Ball of `radius` about `center`, tested at cell centres.
    pub fn ball(&self, radius: f64, center: [f64; 3]) -> Result<VoxelDomain> {
        self.subdomain(|x| {
            let d = [0, 1, 2].map(|a| x[a] - center[a]);
            d[0] * d[0] + d[1] * d[1] + d[2] * d[2] < radius * radius
        })
    }

    /// The operator handle of a subdomain, sharing the box plan.
    pub fn handle<'a>(&self, sub: &'a VoxelDomain) -> Result<OperatorHandle<'a>> {
        self.check(sub)?;
        Ok(OperatorHandle::with_plan(sub, self.plan.clone()))
    }

    fn check(&self, sub: &VoxelDomain) -> Result<()> {
        if sub.grid() != self.grid() || !sub.is_subset_of(&self.domain) {
            return Err(Error::InvalidInput(
                "subdomain is not on the box grid or not inside the box".into(),
            ));
        }
        Ok(())
    }
}

fn cell_of(grid: &GridSpec, x: [f64; 3]) -> usize {
    let ijk = [0, 1, 2]
        .map(|a| (((x[a] - grid.origin[a]) / grid.spacing).floor() as usize).min(grid.dims[a] - 1));
    grid.cell_index(ijk)
}

/// `~BS_sub w`: restrict to `sub`, apply `P B P` there, extend by zero.
pub fn bs_tilde_apply(bx: &BoxDomain, sub: &VoxelDomain, w: &FaceField) -> Result<FaceField> {
    bx.handle(sub)?.apply(w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaMethod {
    /// Extreme eigenvalue of the difference operator by block Krylov iteration.
    Krylov,
    /// Best of the random samples; a lower bound only.
    RandomSampling,
}

#[derive(Clone, Debug)]
pub struct GammaEstimate {
    pub value: f64,
    pub method: GammaMethod,
    pub samples: usize,
    /// Unit field attaining `value`.
    pub lower_witness: FaceField,
    /// Largest `|Delta w| / |w|` among the random samples.
    pub sample_bound: f64,
    /// Relative eigen-residual of the Krylov value (0 for exact zeros).
    pub residual: f64,
    pub spacing: f64,
}

struct Difference<'h, 'a> {
    first: &'h OperatorHandle<'a>,
    second: &'h OperatorHandle<'a>,
    faces: Vec<usize>,
    grid: GridSpec,
}

impl Difference<'_, '_> {
    fn expand(&self, x: &[f64]) -> FaceField {
        let mut w = FaceField::zeros(&self.grid);
        let out = w.as_mut_slice();
        for (&f, v) in self.faces.iter().zip(x) {
            out[f] = *v;
        }
        w
    }

    fn apply_field(&self, w: &FaceField) -> Result<FaceField> {
        let mut a = self.first.apply(w)?;
        a.axpy(-1.0, &self.second.apply(w)?);
        Ok(a)
    }
}

impl LinearOperator for Difference<'_, '_> {
    fn dim(&self) -> usize {
        self.faces.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let d = self.apply_field(&self.expand(x))?;
        let v = d.as_slice();
        for (out, &f) in y.iter_mut().zip(&self.faces) {
            *out = v[f];
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaOptions {
    pub seed: u64,
    pub samples: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GammaOptions {
    fn default() -> Self {
        GammaOptions {
            seed: 0,
            samples: 8,
            tol: 1e-6,
            max_iter: 300,
        }
    }
}

/// `d_Gamma(a, b) = |~BS_a - ~BS_b|`, the largest `|eigenvalue|` of the difference. Random
/// samples, projected onto `K(D)`, give an independent lower bound; when the eigensolver does
/// not converge their best value is returned with [`GammaMethod::RandomSampling`].
pub fn gamma_distance(
    bx: &BoxDomain,
    a: &VoxelDomain,
    b: &VoxelDomain,
    options: &GammaOptions,
) -> Result<GammaEstimate> {
    let ha = bx.handle(a)?;
    let hb = bx.handle(b)?;
    let grid = *bx.grid();
    let spacing = bx.spacing();
    if a.occupancy() == b.occupancy() {
        return Ok(GammaEstimate {
            value: 0.0,
            method: GammaMethod::Krylov,
            samples: 0,
            lower_witness: FaceField::zeros(&grid),
            sample_bound: 0.0,
            residual: 0.0,
            spacing,
        });
    }
    let mut faces: Vec<usize> = a
        .interior_faces()
        .iter()
        .chain(b.interior_faces())
        .copied()
        .collect();
    faces.sort_unstable();
    faces.dedup();
    let diff = Difference {
        first: &ha,
        second: &hb,
        faces,
        grid,
    };

    let box_handle = bx.handle(&bx.domain)?;
    let mut rng = SeedTree::new(options.seed).stream("gamma-samples");
    let mut sample_bound = 0.0;
    let mut sample_witness = FaceField::zeros(&grid);
    for _ in 0..options.samples {
        let mut w = FaceField::zeros(&grid);
        for v in w.as_mut_slice() {
            *v = StandardNormal.sample(&mut rng);
        }
        let w = box_handle.project(&w)?;
        let norm = bx.domain.norm(&w);
        if norm == 0.0 {
            continue;
        }
        let w = w.scaled(1.0 / norm);
        let ratio = bx.domain.norm(&diff.apply_field(&w)?);
        if ratio > sample_bound {
            sample_bound = ratio;
            sample_witness = w;
        }
    }

    let eig = EigenOptions {
        nev: 2,
        tol: options.tol,
        max_iter: options.max_iter,
        seed: options.seed,
    };
    let sol = extreme_eigs_op(&diff, &eig, &[])?;
    if !sol.converged || sol.values.is_empty() {
        return Ok(GammaEstimate {
            value: sample_bound,
            method: GammaMethod::RandomSampling,
            samples: options.samples,
            lower_witness: sample_witness,
            sample_bound,
            residual: sol.residuals.first().copied().unwrap_or(f64::INFINITY),
            spacing,
        });
    }
    let witness = diff.expand(&sol.vectors[0]);
    let witness = witness.scaled(1.0 / bx.domain.norm(&witness));
    Ok(GammaEstimate {
        value: sol.values[0].abs(),
        method: GammaMethod::Krylov,
        samples: options.samples,
        lower_witness: witness,
        sample_bound,
        residual: sol.residuals[0],
        spacing,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzReport {
    pub k: usize,
    /// `k`-th singular value of `~BS_a`, i.e. `1/|mu|` of the `k`-th eigenvalue by magnitude.
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub d_gamma: f64,
    /// Allowance for the eigen-residuals of all three numbers.
    pub tolerance: f64,
    /// `d_gamma + tolerance - |lambda_a - lambda_b|`.
    pub slack: f64,
    pub holds: bool,
}

/// `k`-th largest `|eigenvalue|` of `~BS` on `sub` (1-based), with magnitude ties ordered
/// positive first.
pub fn kth_singular_value(
    bx: &BoxDomain,
    sub: &VoxelDomain,
    k: usize,
    options: &GammaOptions,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("k is 1-based".into()));
    }
    let handle = bx.handle(sub)?;
    let eig = EigenOptions {
        nev: k,
        tol: options.tol,
        max_iter: options.max_iter,
        seed: options.seed,
    };
    let est = extreme_eigs(&handle, &eig)?;
    if !est.converged {
        let worst = est.residuals.iter().fold(0.0f64, |m, r| m.max(*r));
        return Err(Error::EigenNotConverged {
            iterations: est.iterations,
            residual: worst,
        });
    }
    let order = magnitude_order(&est.values);
    order
        .get(k - 1)
        .map(|&i| est.values[i].abs())
        .ok_or_else(|| Error::InvalidInput(format!("domain has fewer than {k} eigenvalues")))
}

/// Checks `|lambda_k(a) - lambda_k(b)| <= d_Gamma(a, b)` up to solver tolerance.
pub fn lipschitz_check(
    bx: &BoxDomain,
    a: &VoxelDomain,
    b: &VoxelDomain,
    k: usize,
    options: &GammaOptions,
) -> Result<LipschitzReport> {
    let gamma = gamma_distance(bx, a, b, options)?;
    lipschitz_report(bx, a, b, k, &gamma, options)
}

/// [`lipschitz_check`] against an already computed distance.
pub fn lipschitz_report(
    bx: &BoxDomain,
    a: &VoxelDomain,
    b: &VoxelDomain,
    k: usize,
    gamma: &GammaEstimate,
    options: &GammaOptions,
) -> Result<LipschitzReport> {
    let (la, lb) = rayon::join(
        || kth_singular_value(bx, a, k, options),
        || kth_singular_value(bx, b, k, options),
    );
    let (la, lb) = (la?, lb?);
    let tolerance = options.tol * (la + lb) + gamma.residual * gamma.value;
    let slack = gamma.value + tolerance - (la - lb).abs();
    Ok(LipschitzReport {
        k,
        lambda_a: la,
        lambda_b: lb,
        d_gamma: gamma.value,
        tolerance,
        slack,
        holds: slack >= 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> BoxDomain {
        BoxDomain::cube(0.6, 12).unwrap()
    }

    fn random(grid: &GridSpec, seed: u64) -> FaceField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = FaceField::zeros(grid);
        for v in w.as_mut_slice() {
            *v = rng.random_range(-1.0..1.0);
        }
        w
    }

    #[test]
    fn full_box_matches_its_own_operator() {
        let bx = setup();
        let w = random(bx.grid(), 1);
        let a = bs_tilde_apply(&bx, bx.domain(), &w).unwrap();
        let b = OperatorHandle::new(bx.domain()).apply(&w).unwrap();
        let mut d = a.clone();
        d.axpy(-1.0, &b);
        assert!(d.max_abs() <= 1e-12 * a.max_abs());
    }

    #[test]
    fn fields_outside_the_subdomain_are_killed() {
        let bx = setup();
        let sub = bx.ball(0.3, [0.0; 3]).unwrap();
        let mut w = random(bx.grid(), 2);
        let grid = *bx.grid();
        for (f, v) in w.as_mut_slice().iter_mut().enumerate() {
            let c = grid.face_center(f);
            if c.iter().map(|x| x * x).sum::<f64>() < 0.45 * 0.45 {
                *v = 0.0;
            }
        }
        assert_eq!(bs_tilde_apply(&bx, &sub, &w).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn tilde_operator_is_linear() {
        let bx = setup();
        let sub = bx.ball(0.4, [0.0; 3]).unwrap();
        let (x, y) = (random(bx.grid(), 3), random(bx.grid(), 4));
        let mut xy = x.scaled(2.0);
        xy.axpy(-0.5, &y);
        let lhs = bs_tilde_apply(&bx, &sub, &xy).unwrap();
        let mut rhs = bs_tilde_apply(&bx, &sub, &x).unwrap().scaled(2.0);
        rhs.axpy(-0.5, &bs_tilde_apply(&bx, &sub, &y).unwrap());
        let mut d = lhs.clone();
        d.axpy(-1.0, &rhs);
        assert!(d.max_abs() <= 1e-10 * lhs.max_abs());
    }

    #[test]
    fn identical_domains_are_at_distance_zero() {
        let bx = setup();
        let a = bx.ball(0.4, [0.0; 3]).unwrap();
        let g = gamma_distance(&bx, &a, &a.clone(), &GammaOptions::default()).unwrap();
        assert!(g.value <= 1e-10);
    }

    #[test]
    fn distance_is_symmetric_and_dominates_samples() {
        let bx = setup();
        let a = bx.ball(0.35, [0.0; 3]).unwrap();
        let b = bx.ball(0.5, [0.0; 3]).unwrap();
        let opts = GammaOptions::default();
        let ab = gamma_distance(&bx, &a, &b, &opts).unwrap();
        let ba = gamma_distance(&bx, &b, &a, &opts).unwrap();
        assert_eq!(ab.method, GammaMethod::Krylov);
        assert!(ab.value > 0.0);
        assert!((ab.value - ba.value).abs() <= 1e-6 * ab.value);
        assert!(ab.sample_bound <= ab.value * (1.0 + 1e-6));
    }

    #[test]
    fn foreign_subdomains_are_rejected() {
        let bx = setup();
        let other = BoxDomain::cube(0.6, 10).unwrap();
        let sub = other.ball(0.3, [0.0; 3]).unwrap();
        assert!(bs_tilde_apply(&bx, &sub, &FaceField::zeros(bx.grid())).is_err());
        assert!(BoxDomain::cube(-1.0, 8).is_err());
    }
}
