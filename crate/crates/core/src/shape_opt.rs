//! Minimization of the scale-free objective `J = |Omega|^{1/3} mu_1` over convex support
//! bodies.
//!
//! Descent direction. For a normal boundary velocity `V_n` the first variation is
//!
//! ```text
//! dJ = -J * integral_{dOmega} g V_n dS,   g = |u|^2 / |u|_2^2 - 1 / (3 |Omega|)
//! ```
//!
//! (`mu_1' = -mu_1 * int |u|^2 V_n / |u|^2` and `|Omega|' = int V_n`), so moving the boundary
//! outward with speed `+g` lowers `J`. A support function changes by the normal speed at
//! the contact point, hence the update `h <- h + step * g`.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::convex_body::{
    dot, eval_support, least_squares_coefficients, project_to_convex, volume, SphereQuadrature,
    SupportBody,
};
use crate::error::{Error, Result};
use crate::grid::{
    boundary_face_weights, boundary_trace, boundary_trace_sq, rasterize, rasterize_on, CellField,
    FaceField, GridSpec, VoxelDomain,
};
use crate::spectral::{first_positive_mu, OperatorHandle, SpectralOptions, SpectralResult};

/// One evaluation of `J` together with the solve it came from.
#[derive(Clone, Debug)]
pub struct Objective {
    pub j: f64,
    pub mu1: f64,
    /// Voxel volume.
    pub volume: f64,
    pub domain: VoxelDomain,
    pub result: SpectralResult,
}

/// `J` at `resolution` cells across the longest bounding-box edge.
pub fn objective(
    body: &SupportBody,
    quad: &SphereQuadrature,
    resolution: usize,
    options: &SpectralOptions,
) -> Result<Objective> {
    evaluate(rasterize(body, quad, resolution)?, options)
}

/// `J` on the lattice of the given spacing, so that nearby bodies share grid cells.
pub fn objective_with_spacing(
    body: &SupportBody,
    quad: &SphereQuadrature,
    spacing: f64,
    options: &SpectralOptions,
) -> Result<Objective> {
    evaluate(
        rasterize_on(body, quad, GridSpec::for_body_with_spacing(body, spacing))?,
        options,
    )
}

pub fn evaluate(domain: VoxelDomain, options: &SpectralOptions) -> Result<Objective> {
    let result = first_positive_mu(&OperatorHandle::new(&domain), options)?;
    let volume = domain.volume();
    Ok(Objective {
        j: volume.cbrt() * result.mu1,
        mu1: result.mu1,
        volume,
        domain,
        result,
    })
}

fn cell_norm_sq(domain: &VoxelDomain, u: &CellField) -> f64 {
    u.sum_sq() * domain.grid().cell_volume()
}

fn trace_sq(domain: &VoxelDomain, field: &FaceField) -> Vec<f64> {
    boundary_trace(domain, field)
        .iter()
        .map(|t| dot(*t, *t))
        .collect()
}

/// `g = |u|^2 - |u|^2_2 / (3V)` per boundary face, with the tangential trace of
/// [`boundary_trace`].
pub fn shape_gradient(domain: &VoxelDomain, result: &SpectralResult) -> Vec<f64> {
    field_gradient(domain, &result.eigenfield)
}

pub fn field_gradient(domain: &VoxelDomain, field: &FaceField) -> Vec<f64> {
    let shift = domain.inner(field, field) / (3.0 * domain.volume());
    trace_sq(domain, field)
        .into_iter()
        .map(|t| t - shift)
        .collect()
}

/// First-order change of `J` along the normal velocity `vn` (one value per boundary face),
/// as a central difference would see it.
///
/// On a degenerate eigenspace the branches split with slopes given by the eigenvalues of
/// `M_ij = -J int (u_i.u_j - <u_i,u_j>/(3V)) vn dS` in the Gram metric of the cluster.
/// `mu_1` follows the lowest branch on both sides, so the symmetric difference quotient
/// tends to the mean of the extreme slopes.
pub fn directional_derivative(domain: &VoxelDomain, result: &SpectralResult, vn: &[f64]) -> f64 {
    let j = domain.volume().cbrt() * result.mu1;
    let traces: Vec<Vec<[f64; 3]>> = result
        .cluster
        .iter()
        .map(|f| boundary_trace(domain, f))
        .collect();
    let k = traces.len();
    let weights = boundary_face_weights(domain);
    let flux: f64 = weights.iter().zip(vn).map(|(w, v)| w * v).sum();
    let inv3v = 1.0 / (3.0 * domain.volume());
    let mut gram = DMatrix::zeros(k, k);
    let mut m = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let g = domain.inner(&result.cluster[a], &result.cluster[b]);
            let surface: f64 = traces[a]
                .iter()
                .zip(&traces[b])
                .zip(weights.iter().zip(vn))
                .map(|((x, y), (w, v))| w * v * dot(*x, *y))
                .sum();
            let value = -j * (surface - g * inv3v * flux);
            gram[(a, b)] = g;
            gram[(b, a)] = g;
            m[(a, b)] = value;
            m[(b, a)] = value;
        }
    }
    let chol = gram
        .cholesky()
        .expect("cluster fields are linearly independent");
    let l_inv = chol
        .l()
        .try_inverse()
        .expect("triangular factor is invertible");
    let reduced = &l_inv * m * l_inv.transpose();
    let eig = SymmetricEigen::new(reduced).eigenvalues;
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    0.5 * (lo + hi)
}

/// Finite-difference check of the gradient along the support perturbation `dh`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCheck {
    pub finite_difference: f64,
    pub predicted: f64,
    pub j: f64,
}

impl GradientCheck {
    pub fn ratio(&self) -> f64 {
        self.finite_difference / self.predicted
    }

    /// Same sign and magnitude ratio in `[0.5, 2]`.
    pub fn agrees(&self) -> bool {
        let r = self.ratio();
        (0.5..=2.0).contains(&r)
    }
}

/// Central difference of `J(body + t dh)` at `t = +-eps` on the lattice of `spacing`,
/// against [`directional_derivative`] with `V_n = dh(N)`.
pub fn gradient_check(
    body: &SupportBody,
    dh: &SupportBody,
    eps: f64,
    quad: &SphereQuadrature,
    spacing: f64,
    options: &SpectralOptions,
) -> Result<GradientCheck> {
    let base = objective_with_spacing(body, quad, spacing, options)?;
    let vn: Vec<f64> = base
        .domain
        .boundary_faces()
        .iter()
        .map(|b| eval_support(dh, b.normal))
        .collect();
    let predicted = directional_derivative(&base.domain, &base.result, &vn);
    let plus = objective_with_spacing(&body.added(&dh.scaled(eps)), quad, spacing, options)?;
    let minus = objective_with_spacing(&body.added(&dh.scaled(-eps)), quad, spacing, options)?;
    Ok(GradientCheck {
        finite_difference: (plus.j - minus.j) / (2.0 * eps),
        predicted,
        j: base.j,
    })
}

/// Applies `h(v) <- h(v) + step * g(x(v))` at every quadrature direction, where `g` is
/// averaged over the boundary faces within `1.5 h` of the contact point `x(v)` (nearest
/// face when none is that close). Refits by least squares (zonal only for axisymmetric
/// bodies), rescales to `target_volume` (voxel volume at `resolution`) and restores the
/// convexity certificate at `margin`.
#[allow(clippy::too_many_arguments)]
pub fn step_body(
    body: &SupportBody,
    quad: &SphereQuadrature,
    domain: &VoxelDomain,
    g: &[f64],
    step: f64,
    target_volume: f64,
    resolution: usize,
    margin: f64,
) -> Result<SupportBody> {
    if g.len() != domain.boundary_faces().len() {
        return Err(Error::InvalidInput(format!(
            "gradient has {} values, domain has {} boundary faces",
            g.len(),
            domain.boundary_faces().len()
        )));
    }
    if g.iter().any(|v| !v.is_finite()) || !step.is_finite() {
        return Err(Error::InvalidInput(
            "non-finite shape gradient or step".into(),
        ));
    }
    let sampled = sample_at_contacts(body, quad, domain, g);
    let targets: Vec<f64> = body
        .support_values(quad)
        .iter()
        .zip(&sampled)
        .map(|(h, gv)| h + step * gv)
        .collect();
    let coeffs = least_squares_coefficients(quad, body.lmax(), body.is_axisymmetric(), &targets);
    let moved = SupportBody::new(body.lmax(), coeffs, body.is_axisymmetric())?;
    let v = volume(&moved, quad, resolution);
    if v <= 0.0 {
        return Err(Error::EmptyDomain("step collapsed the body".into()));
    }
    let rescaled = moved.scaled((target_volume / v).cbrt());
    project_to_convex(&rescaled, quad, margin)
}

fn sample_at_contacts(
    body: &SupportBody,
    quad: &SphereQuadrature,
    domain: &VoxelDomain,
    g: &[f64],
) -> Vec<f64> {
    let grid = domain.grid();
    let centers: Vec<[f64; 3]> = domain
        .boundary_faces()
        .iter()
        .map(|b| grid.face_center(b.face))
        .collect();
    let r2 = (1.5 * domain.spacing()).powi(2);
    body.contact_points(quad)
        .par_iter()
        .map(|p| {
            let (mut sum, mut count) = (0.0, 0usize);
            let mut nearest = (f64::INFINITY, 0usize);
            for (i, c) in centers.iter().enumerate() {
                let d2 = (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2) + (c[2] - p[2]).powi(2);
                if d2 <= r2 {
                    sum += g[i];
                    count += 1;
                }
                if d2 < nearest.0 {
                    nearest = (d2, i);
                }
            }
            if count > 0 {
                sum / count as f64
            } else {
                g[nearest.1]
            }
        })
        .collect()
}

/// Boundary statistics of the normalized trace `t = 3V |u|^2 / |u|^2_2`, which is
/// identically 1 at a smooth optimum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostic {
    /// Area-weighted variance of `t`.
    pub variance: f64,
    pub min_trace: f64,
    /// Trace looks constant and nonvanishing.
    pub ph_flag: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticThresholds {
    pub variance: f64,
    pub min_trace: f64,
}

pub fn optimality_diagnostic(
    domain: &VoxelDomain,
    result: &SpectralResult,
    thresholds: &DiagnosticThresholds,
) -> Diagnostic {
    let f = &result.eigenfield;
    diagnose(domain, &trace_sq(domain, f), domain.inner(f, f), thresholds)
}

/// [`optimality_diagnostic`] for a cell field, with the one-sided cell trace.
pub fn trace_diagnostic(
    domain: &VoxelDomain,
    u: &CellField,
    thresholds: &DiagnosticThresholds,
) -> Diagnostic {
    diagnose(
        domain,
        &boundary_trace_sq(domain, u),
        cell_norm_sq(domain, u),
        thresholds,
    )
}

fn diagnose(
    domain: &VoxelDomain,
    trace: &[f64],
    norm_sq: f64,
    thresholds: &DiagnosticThresholds,
) -> Diagnostic {
    let scale = if norm_sq > 0.0 {
        3.0 * domain.volume() / norm_sq
    } else {
        0.0
    };
    let weights = boundary_face_weights(domain);
    let area: f64 = weights.iter().sum();
    let t: Vec<f64> = trace.iter().map(|v| v * scale).collect();
    let mean = t.iter().zip(&weights).map(|(v, w)| v * w).sum::<f64>() / area;
    let variance = t
        .iter()
        .zip(&weights)
        .map(|(v, w)| w * (v - mean).powi(2))
        .sum::<f64>()
        / area;
    let min_trace = t.iter().copied().fold(f64::INFINITY, f64::min);
    Diagnostic {
        variance,
        min_trace,
        ph_flag: variance < thresholds.variance && min_trace > thresholds.min_trace,
    }
}

/// Discretization noise of `J` and of the trace statistics, from one body at two
/// neighbouring resolutions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseFloor {
    /// Declared tolerance on `J`: the discretization noise between neighbouring resolutions.
    pub j_band: f64,
    pub thresholds: DiagnosticThresholds,
}

/// Smallest thresholds and band, so that exact ties still count as noise.
const NOISE_MIN_RELATIVE: f64 = 1e-3;
const NOISE_MIN_TRACE: f64 = 1e-3;

pub fn noise_floor(a: &Objective, b: &Objective) -> NoiseFloor {
    let loose = DiagnosticThresholds {
        variance: 0.0,
        min_trace: 0.0,
    };
    let da = optimality_diagnostic(&a.domain, &a.result, &loose);
    let db = optimality_diagnostic(&b.domain, &b.result, &loose);
    NoiseFloor {
        j_band: (a.j - b.j).abs().max(NOISE_MIN_RELATIVE * a.j),
        thresholds: DiagnosticThresholds {
            variance: (da.variance - db.variance).abs().max(NOISE_MIN_TRACE),
            min_trace: (da.min_trace - db.min_trace).abs().max(NOISE_MIN_TRACE),
        },
    }
}

/// Evaluates `body` at `resolution` and `resolution + 2`.
pub fn measure_noise_floor(
    body: &SupportBody,
    quad: &SphereQuadrature,
    resolution: usize,
    options: &SpectralOptions,
) -> Result<(Objective, NoiseFloor)> {
    let a = objective(body, quad, resolution, options)?;
    let b = objective(body, quad, resolution + 2, options)?;
    let floor = noise_floor(&a, &b);
    Ok((a, floor))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptConfig {
    pub lmax: usize,
    pub axisymmetric: bool,
    pub resolution: usize,
    /// Dimensionless step: the support moves by `step * V^{1/3} (t - 1) / 3`, with `t` the
    /// normalized trace of [`Diagnostic`].
    pub step: f64,
    pub max_iter: usize,
    pub margin: f64,
    pub seed: u64,
    /// Compass search over low-degree coefficients when backtracking fails.
    pub fallback: bool,
    pub tol: f64,
    pub max_backtracks: usize,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            lmax: 6,
            axisymmetric: false,
            resolution: 24,
            step: 0.1,
            max_iter: 10,
            margin: crate::convex_body::DEFAULT_CONVEXITY_MARGIN,
            seed: 0,
            fallback: false,
            tol: 1e-6,
            max_backtracks: 3,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step >= 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "step must be finite and non-negative, got {}",
                self.step
            )));
        }
        if self.resolution < 16 {
            return Err(Error::InvalidInput(format!(
                "resolution must be at least 16, got {}",
                self.resolution
            )));
        }
        if self.margin.is_nan() || self.margin < 0.0 {
            return Err(Error::InvalidInput(format!(
                "margin must be non-negative, got {}",
                self.margin
            )));
        }
        Ok(())
    }

    fn spectral(&self) -> SpectralOptions {
        SpectralOptions {
            seed: self.seed,
            tol: self.tol,
            ..SpectralOptions::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptRecord {
    pub iter: usize,
    pub body: SupportBody,
    pub volume: f64,
    pub mu1: f64,
    pub j: f64,
    pub variance: f64,
    pub min_trace: f64,
    /// Step of the accepted move, or the last one tried.
    pub step: f64,
    pub accepted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    StepUnderflow,
    GradientFlat,
    Failed,
}

#[derive(Clone, Debug)]
pub struct OptTrajectory {
    /// The starting body (iteration 0).
    pub initial: Option<OptRecord>,
    pub records: Vec<OptRecord>,
    pub noise: Option<NoiseFloor>,
    pub stop: StopReason,
    pub error: Option<Arc<Error>>,
}

impl OptTrajectory {
    /// `J` of the start followed by every iteration.
    pub fn j_values(&self) -> Vec<f64> {
        self.initial
            .iter()
            .chain(&self.records)
            .map(|r| r.j)
            .collect()
    }

    /// `iter,J,mu1,V,variance,min_trace,step,accepted`, one row per iteration.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "iter,J,mu1,V,variance,min_trace,step,accepted")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:.12e},{:.12e},{:.12e},{:.6e},{:.6e},{:.6e},{}",
                r.iter, r.j, r.mu1, r.volume, r.variance, r.min_trace, r.step, r.accepted
            )?;
        }
        Ok(())
    }
}

fn record(
    iter: usize,
    body: &SupportBody,
    obj: &Objective,
    noise: &NoiseFloor,
    step: f64,
    accepted: bool,
) -> OptRecord {
    let d = optimality_diagnostic(&obj.domain, &obj.result, &noise.thresholds);
    OptRecord {
        iter,
        body: body.clone(),
        volume: obj.volume,
        mu1: obj.mu1,
        j: obj.j,
        variance: d.variance,
        min_trace: d.min_trace,
        step,
        accepted,
    }
}

/// Backtracking descent on `J`: a candidate is accepted when `J` does not increase. Errors
/// end the run; the records so far are kept.
pub fn optimize(
    config: &OptConfig,
    initial: &SupportBody,
    quad: &SphereQuadrature,
) -> OptTrajectory {
    let mut traj = OptTrajectory {
        initial: None,
        records: Vec::new(),
        noise: None,
        stop: StopReason::Failed,
        error: None,
    };
    if let Err(e) = run(config, initial, quad, &mut traj) {
        traj.stop = StopReason::Failed;
        traj.error = Some(Arc::new(e));
    }
    traj
}

fn run(
    config: &OptConfig,
    initial: &SupportBody,
    quad: &SphereQuadrature,
    traj: &mut OptTrajectory,
) -> Result<()> {
    config.validate()?;
    let spectral = config.spectral();
    let start = if config.axisymmetric && !initial.is_axisymmetric() {
        return Err(Error::InvalidInput(
            "axisymmetric run needs an axisymmetric start".into(),
        ));
    } else {
        initial.with_lmax(config.lmax)
    };
    let start = SupportBody::new(config.lmax, start.coeffs().to_vec(), config.axisymmetric)?;
    let (mut current, noise) = measure_noise_floor(&start, quad, config.resolution, &spectral)?;
    traj.noise = Some(noise);
    traj.initial = Some(record(0, &start, &current, &noise, 0.0, true));
    let mut body = start;
    let target = current.volume;
    let mut step = config.step;
    traj.stop = StopReason::MaxIterations;
    for iter in 1..=config.max_iter {
        if config.step == 0.0 {
            traj.records
                .push(record(iter, &body, &current, &noise, 0.0, true));
            continue;
        }
        let diag = optimality_diagnostic(&current.domain, &current.result, &noise.thresholds);
        if diag.variance < noise.thresholds.variance {
            traj.stop = StopReason::GradientFlat;
            break;
        }
        let raw = shape_gradient(&current.domain, &current.result);
        let f = &current.result.eigenfield;
        let scale = current.volume.powf(4.0 / 3.0) / current.domain.inner(f, f);
        let g: Vec<f64> = raw.iter().map(|v| v * scale).collect();

        let mut accepted = None;
        let mut tried = step;
        for k in 0..=config.max_backtracks {
            tried = step / f64::powi(2.0, k as i32);
            let cand = step_body(
                &body,
                quad,
                &current.domain,
                &g,
                tried,
                target,
                config.resolution,
                config.margin,
            )?;
            let obj = objective(&cand, quad, config.resolution, &spectral)?;
            if obj.j <= current.j {
                accepted = Some((cand, obj));
                break;
            }
        }
        if accepted.is_none() && config.fallback {
            accepted = compass_search(config, &body, &current, quad, tried, target, &spectral)?;
        }
        match accepted {
            Some((cand, obj)) => {
                traj.records
                    .push(record(iter, &cand, &obj, &noise, tried, true));
                body = cand;
                current = obj;
                if tried < 1e-3 * config.step {
                    traj.stop = StopReason::StepUnderflow;
                    break;
                }
                step = (tried * 1.5).min(2.0 * config.step);
            }
            None => {
                traj.records
                    .push(record(iter, &body, &current, &noise, tried, false));
                step = tried / 2.0;
                if step < 1e-3 * config.step {
                    traj.stop = StopReason::StepUnderflow;
                    break;
                }
            }
        }
    }
    Ok(())
}

/// `+-delta` on each coefficient of degree 2 to 4 (zonal ones only when axisymmetric), in
/// index order; the first strict decrease of `J` wins.
fn compass_search(
    config: &OptConfig,
    body: &SupportBody,
    current: &Objective,
    quad: &SphereQuadrature,
    step: f64,
    target: f64,
    spectral: &SpectralOptions,
) -> Result<Option<(SupportBody, Objective)>> {
    use crate::convex_body::harmonics::degree_order;
    let delta = step * current.volume.cbrt();
    for (k, _) in body.coeffs().iter().enumerate() {
        let (l, m) = degree_order(k);
        if !(2..=4).contains(&l) || (config.axisymmetric && m != 0) {
            continue;
        }
        for sign in [1.0, -1.0] {
            let mut coeffs = body.coeffs().to_vec();
            coeffs[k] += sign * delta;
            let moved = SupportBody::new(body.lmax(), coeffs, body.is_axisymmetric())?;
            let v = volume(&moved, quad, config.resolution);
            let cand = project_to_convex(&moved.scaled((target / v).cbrt()), quad, config.margin)?;
            let obj = objective(&cand, quad, config.resolution, spectral)?;
            if obj.j < current.j {
                return Ok(Some((cand, obj)));
            }
        }
    }
    Ok(None)
}
