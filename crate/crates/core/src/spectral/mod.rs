//! The Leray-projected Biot-Savart operator `A = P B P` on face fields and its extreme
//! eigenvalues. Positive eigenvalues of `A` are the reciprocals `1/mu_k` of the positive curl
//! eigenvalues, negative ones those of the negative branch.
//!
//! Face fields enter the cell-based sum through [`interpolate_to_cells`] and leave through
//! its adjoint [`restrict_to_faces`], so `A` is exactly symmetric in the discrete inner
//! product.

mod biot_savart;
mod eigen;

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

pub use biot_savart::{biot_savart_apply, biot_savart_direct, BiotSavart};
pub use eigen::{
    block_size, extreme_eigs_op, magnitude_order, EigenOptions, EigenSolution, LinearOperator,
};

use crate::bounds::faber_krahn_bound;
use crate::error::{Error, Result};
use crate::grid::leray::LerayProjector;
use crate::grid::{
    interpolate_to_cells, restrict_to_faces, FaceField, PoissonOptions, VoxelDomain,
};

/// `P B P` on one domain, with a cached FFT plan and Poisson preconditioner.
pub struct OperatorHandle<'a> {
    domain: &'a VoxelDomain,
    plan: Arc<BiotSavart>,
    projector: LerayProjector,
    applications: AtomicUsize,
}

impl<'a> OperatorHandle<'a> {
    pub fn new(domain: &'a VoxelDomain) -> Self {
        Self::with_plan(domain, Arc::new(BiotSavart::new(domain.grid())))
    }

    /// Reuses a convolution plan built for the same grid (e.g. for subdomains of a box).
    pub fn with_plan(domain: &'a VoxelDomain, plan: Arc<BiotSavart>) -> Self {
        assert_eq!(
            plan.grid(),
            domain.grid(),
            "plan built for a different grid"
        );
        OperatorHandle {
            domain,
            plan,
            projector: LerayProjector::new(domain, PoissonOptions::default()),
            applications: AtomicUsize::new(0),
        }
    }

    pub fn domain(&self) -> &'a VoxelDomain {
        self.domain
    }

    pub fn plan(&self) -> &Arc<BiotSavart> {
        &self.plan
    }

    /// Number of Biot-Savart evaluations so far.
    pub fn applications(&self) -> usize {
        self.applications.load(Ordering::Relaxed)
    }

    pub fn project(&self, w: &FaceField) -> Result<FaceField> {
        self.projector.project(self.domain, w)
    }

    /// `P B P w`.
    pub fn apply(&self, w: &FaceField) -> Result<FaceField> {
        let pw = self.project(w)?;
        self.apply_on_range(&pw)
    }

    /// `P B w`, equal to [`Self::apply`] when `w` is already projected.
    fn apply_on_range(&self, w: &FaceField) -> Result<FaceField> {
        self.applications.fetch_add(1, Ordering::Relaxed);
        let u = interpolate_to_cells(self.domain, w);
        let bu = self.plan.apply(self.domain, &u);
        self.project(&restrict_to_faces(self.domain, &bu))
    }

    /// Values on interior faces, in [`VoxelDomain::interior_faces`] order.
    pub fn compress(&self, w: &FaceField) -> Vec<f64> {
        let v = w.as_slice();
        self.domain.interior_faces().iter().map(|&f| v[f]).collect()
    }

    pub fn expand(&self, x: &[f64]) -> FaceField {
        let mut w = FaceField::zeros(self.domain.grid());
        let out = w.as_mut_slice();
        for (&f, v) in self.domain.interior_faces().iter().zip(x) {
            out[f] = *v;
        }
        w
    }

    /// The operator on interior-face coordinates, acting on the range of `P`.
    pub fn on_range(&self) -> impl LinearOperator + '_ {
        RangeOperator(self)
    }
}

impl std::fmt::Debug for OperatorHandle<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorHandle")
            .field("cells", &self.domain.cell_count())
            .field("plan", &self.plan)
            .field("applications", &self.applications())
            .finish()
    }
}

struct RangeOperator<'h, 'a>(&'h OperatorHandle<'a>);

impl LinearOperator for RangeOperator<'_, '_> {
    fn dim(&self) -> usize {
        self.0.domain.interior_faces().len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let out = self.0.apply_on_range(&self.0.expand(x))?;
        y.copy_from_slice(&self.0.compress(&out));
        Ok(())
    }

    fn prepare(&self, x: &mut [f64]) -> Result<()> {
        let p = self.0.project(&self.0.expand(x))?;
        x.copy_from_slice(&self.0.compress(&p));
        Ok(())
    }
}

/// `P B P w`.
pub fn projected_bs_apply(handle: &OperatorHandle, w: &FaceField) -> Result<FaceField> {
    handle.apply(w)
}

/// Extreme eigenpairs with fields scaled to unit discrete L2 norm.
#[derive(Clone, Debug)]
pub struct SpectrumEstimate {
    pub values: Vec<f64>,
    pub fields: Vec<FaceField>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn to_fields(handle: &OperatorHandle, vectors: &[Vec<f64>]) -> Vec<FaceField> {
    let scale = handle.domain.grid().cell_volume().sqrt().recip();
    vectors
        .iter()
        .map(|v| handle.expand(v).scaled(scale))
        .collect()
}

/// The `options.nev` largest-magnitude eigenpairs of `P B P` (block size at least 4).
pub fn extreme_eigs(handle: &OperatorHandle, options: &EigenOptions) -> Result<SpectrumEstimate> {
    let sol = extreme_eigs_op(&handle.on_range(), options, &[])?;
    Ok(SpectrumEstimate {
        fields: to_fields(handle, &sol.vectors),
        values: sol.values,
        residuals: sol.residuals,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralOptions {
    pub seed: u64,
    /// Relative eigen-residual tolerance.
    pub tol: f64,
    /// Cap on block steps per eigensolve.
    pub max_iter: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            seed: 0,
            tol: 1e-6,
            max_iter: 400,
        }
    }
}

/// Relative gap below which positive eigenvalues count as one degenerate cluster.
pub const CLUSTER_GAP: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct SpectralResult {
    pub mu1: f64,
    pub lambda_max: f64,
    /// Unit L2 norm.
    pub eigenfield: FaceField,
    /// `|A u - lambda u| / (lambda |u|)`.
    pub residual: f64,
    /// Block steps of the final solve.
    pub iterations: usize,
    /// `(mu_{-1}, field)` from the most negative returned eigenvalue.
    pub negative_branch: Option<(f64, FaceField)>,
    /// Orthonormal basis of the eigenspace of `lambda_max` (includes `eigenfield`).
    pub cluster: Vec<FaceField>,
    /// All returned eigenvalues, by magnitude.
    pub values: Vec<f64>,
}

/// Solves with 4, 8, then 16 wanted pairs until a positive eigenvalue appears together with
/// its whole degenerate cluster. Warm-starts each retry from the previous Ritz vectors.
pub fn first_positive_mu(
    handle: &OperatorHandle,
    options: &SpectralOptions,
) -> Result<SpectralResult> {
    let op = handle.on_range();
    let mut warm: Vec<Vec<f64>> = Vec::new();
    let mut last_nev = 0;
    for nev in [4usize, 8, 16] {
        let nev = nev.min(op.dim());
        if nev == last_nev {
            break;
        }
        last_nev = nev;
        let opts = EigenOptions {
            nev,
            tol: options.tol,
            max_iter: options.max_iter,
            seed: options.seed,
        };
        let sol = extreme_eigs_op(&op, &opts, &warm)?;
        if !sol.converged {
            let worst = sol.residuals.iter().fold(0.0f64, |m, r| m.max(*r));
            return Err(Error::EigenNotConverged {
                iterations: sol.iterations,
                residual: worst,
            });
        }
        let top = sol
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(i, _)| i)
            .next();
        let tail = sol.values.last().copied().unwrap_or(0.0).abs();
        let final_round = nev == 16 || nev == op.dim();
        if let Some(i) = top {
            let lambda = sol.values[i];
            let cut = lambda * (1.0 - CLUSTER_GAP);
            if tail < cut || final_round {
                return Ok(assemble(handle, &sol, i, cut));
            }
        }
        if final_round {
            break;
        }
        warm = sol.vectors;
    }
    Err(Error::NoPositiveEigenvalue { nev: last_nev })
}

fn assemble(handle: &OperatorHandle, sol: &EigenSolution, top: usize, cut: f64) -> SpectralResult {
    let fields = to_fields(handle, &sol.vectors);
    let lambda = sol.values[top];
    let cluster = sol
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= cut)
        .map(|(i, _)| fields[i].clone())
        .collect();
    let negative_branch = sol
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v < 0.0)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (1.0 / v, fields[i].clone()));
    SpectralResult {
        mu1: 1.0 / lambda,
        lambda_max: lambda,
        eigenfield: fields[top].clone(),
        residual: sol.residuals[top],
        iterations: sol.iterations,
        negative_branch,
        cluster,
        values: sol.values.clone(),
    }
}

/// `H(w) = <P B P w, w>`.
pub fn helicity(handle: &OperatorHandle, w: &FaceField) -> Result<f64> {
    Ok(handle.domain.inner(&handle.apply(w)?, w))
}

/// `|w|^2 / H(w)` when the helicity is positive: an upper bound for `mu_1`.
pub fn rayleigh_upper_bound(handle: &OperatorHandle, w: &FaceField) -> Result<Option<f64>> {
    let h = helicity(handle, w)?;
    Ok((h > 0.0).then(|| handle.domain.inner(w, w) / h))
}

/// Plain `key=value` lines.
pub fn write_report(
    mut out: impl Write,
    result: &SpectralResult,
    domain: &VoxelDomain,
) -> Result<()> {
    let volume = domain.volume();
    writeln!(out, "mu1={}", result.mu1)?;
    writeln!(out, "lambda_max={}", result.lambda_max)?;
    writeln!(out, "residual={:e}", result.residual)?;
    writeln!(out, "iterations={}", result.iterations)?;
    writeln!(out, "volume={volume}")?;
    writeln!(out, "faber_krahn_bound={}", faber_krahn_bound(volume)?)?;
    if let Some((mu_neg, _)) = &result.negative_branch {
        writeln!(out, "mu_minus1={mu_neg}")?;
    }
    writeln!(out, "multiplicity={}", result.cluster.len())?;
    writeln!(out, "cells={}", domain.cell_count())?;
    writeln!(out, "spacing={}", domain.spacing())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::ball_mu_reference;
    use crate::convex_body::{SphereQuadrature, SupportBody};
    use crate::grid::{discrete_divergence, discrete_gradient, rasterize};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ball(res: usize) -> VoxelDomain {
        rasterize(
            &SupportBody::ball(1.0),
            &SphereQuadrature::fibonacci(1024),
            res,
        )
        .unwrap()
    }

    fn random_field(d: &VoxelDomain, rng: &mut ChaCha8Rng) -> FaceField {
        let mut f = FaceField::zeros(d.grid());
        for &face in d.interior_faces() {
            f.as_mut_slice()[face] = rng.random_range(-1.0..1.0);
        }
        f
    }

    #[test]
    fn linear_symmetric_and_kills_gradients() {
        let d = ball(12);
        let h = OperatorHandle::new(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = (random_field(&d, &mut rng), random_field(&d, &mut rng));
        let (aa, ab) = (h.apply(&a).unwrap(), h.apply(&b).unwrap());
        let lhs = d.inner(&aa, &b);
        let rhs = d.inner(&a, &ab);
        assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs());
        let mut combo = a.scaled(2.0);
        combo.axpy(-0.5, &b);
        let mut expect = aa.scaled(2.0);
        expect.axpy(-0.5, &ab);
        let got = h.apply(&combo).unwrap();
        let mut diff = got.clone();
        diff.axpy(-1.0, &expect);
        assert!(d.norm(&diff) <= 1e-9 * d.norm(&expect));
        let pot: Vec<f64> = d
            .cell_centers()
            .iter()
            .map(|x| x[0] * x[1] + x[2])
            .collect();
        let g = discrete_gradient(&d, &pot);
        assert!(d.norm(&h.apply(&g).unwrap()) < 1e-9 * d.norm(&g));
        assert!(helicity(&h, &g).unwrap().abs() < 1e-10);
        assert_eq!(h.applications(), 5);
    }

    #[test]
    fn coarse_ball_eigenpair() {
        let d = ball(16);
        let h = OperatorHandle::new(&d);
        let r = first_positive_mu(&h, &SpectralOptions::default()).unwrap();
        let reference = ball_mu_reference(1.0).unwrap();
        assert!((r.mu1 / reference - 1.0).abs() < 0.15, "{}", r.mu1);
        assert!(r.residual <= 1e-6);
        assert_eq!(r.cluster.len(), 3, "{:?}", r.values);
        assert!((d.norm(&r.eigenfield) - 1.0).abs() < 1e-12);
        for b in d.boundary_faces() {
            assert_eq!(r.eigenfield.as_slice()[b.face], 0.0);
        }
        let div = discrete_divergence(&d, &r.eigenfield);
        assert!(div.iter().all(|v| v.abs() < 1e-7));
        let (mu_neg, _) = r.negative_branch.clone().unwrap();
        assert!((mu_neg + r.mu1).abs() < 1e-6 * r.mu1);
        let hel = helicity(&h, &r.eigenfield).unwrap();
        assert!((hel * r.mu1 - 1.0).abs() < 5e-6);
        let q = rayleigh_upper_bound(&h, &r.eigenfield).unwrap().unwrap();
        assert!((q / r.mu1 - 1.0).abs() < 5e-6);
        let (_, neg) = r.negative_branch.as_ref().unwrap();
        assert!(rayleigh_upper_bound(&h, neg).unwrap().is_none());
        let mut report = Vec::new();
        write_report(&mut report, &r, &d).unwrap();
        let text = String::from_utf8(report).unwrap();
        assert!(text.starts_with("mu1="));
        assert!(text.contains("\nfaber_krahn_bound="));
    }
}
