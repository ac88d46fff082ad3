//! Batch front-end: `solve | optimize | bounds | gamma | verify`.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 solver non-convergence, 3 a
//! `verify` check failed.
//!
//! Options come from flags and from an optional `--config` file of `key=value` lines whose
//! keys are the long flag names (`resolution=24`, `axisymmetric=true`); flags win. Every
//! output file starts with one `# beltrami <command> generated unix=...` line and is
//! otherwise a function of the configuration and seed. Files are written to a temporary name and renamed.
//! `BELTRAMI_THREADS` caps the worker pool.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rand::Rng;

use crate::bounds::{ball_mu_reference, cylinder_bound, faber_krahn_bound};
use crate::convex_body::{
    enclosing_cylinder, hausdorff_distance, read_support_body, write_support_body, CylinderSpec,
    SphereQuadrature, SupportBody, DEFAULT_CONVEXITY_MARGIN, DEFAULT_DIRECTIONS,
};
use crate::error::{Error, Result};
use crate::gamma::{gamma_distance, lipschitz_report, BoxDomain, GammaMethod, GammaOptions};
use crate::grid::{
    boundary_face_weights, interpolate_to_cells, rasterize, rasterize_cylinder, rasterize_on,
    write_bfld, FaceField, VoxelDomain,
};
use crate::rng::SeedTree;
use crate::shape_opt::{optimize, shape_gradient, OptConfig, StopReason};
use crate::spectral::{
    first_positive_mu, helicity, rayleigh_upper_bound, write_report, OperatorHandle,
    SpectralOptions, SpectralResult,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

/// Allowance of the computed cylinder eigenvalue below the closed-form bound.
pub const CYLINDER_BOUND_SLACK: f64 = 0.02;

#[derive(Parser, Debug)]
#[command(
    name = "beltrami",
    version,
    about = "First positive curl eigenvalue of convex domains"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// ball | ball:r | spheroid:a,b,c | cylinder:R,h (h is the half-height)
    #[arg(long, global = true)]
    pub shape: Option<String>,
    /// SUPPORTBODY v1 file
    #[arg(long, global = true)]
    pub body: Option<PathBuf>,
    /// Cells across the longest bounding-box edge, in [8, 128]
    #[arg(long, global = true)]
    pub resolution: Option<usize>,
    /// Harmonic degree of fitted bodies, in [0, 12]
    #[arg(long, global = true)]
    pub lmax: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Relative eigen-residual tolerance
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub axisymmetric: bool,
    /// key=value file; flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
pub enum CliCommand {
    /// Solve for mu_1 and dump the eigenfield.
    Solve,
    /// Descend on |Omega|^{1/3} mu_1.
    Optimize {
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        #[arg(long, default_value_t = DEFAULT_CONVEXITY_MARGIN)]
        margin: f64,
        /// Compass search when backtracking fails
        #[arg(long)]
        fallback: bool,
        /// Write a body snapshot every k iterations (0: final body only)
        #[arg(long, default_value_t = 0)]
        snapshot_every: usize,
    },
    /// Closed-form lower bounds.
    Bounds {
        /// R,h
        #[arg(long)]
        cylinder: Option<String>,
        #[arg(long)]
        volume: Option<f64>,
    },
    /// Operator distance between two balls in a box, and the eigenvalue Lipschitz check.
    Gamma {
        /// ball:r1,ball:r2
        #[arg(long)]
        pair: String,
        #[arg(long, default_value_t = 0.65)]
        box_half_width: f64,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 8)]
        samples: usize,
    },
    /// Run the invariant suite and print a pass/fail table.
    Verify {
        /// Resolution 16
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum ShapeSpec {
    Ball(f64),
    Spheroid(f64, f64, f64),
    Cylinder(f64, f64),
    File(PathBuf, SupportBody),
}

impl ShapeSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidInput(format!(
                "unknown shape {text:?}; expected ball[:r], spheroid:a,b,c or cylinder:R,h"
            ))
        };
        let (name, args) = text.split_once(':').unwrap_or((text, ""));
        let nums: Vec<f64> = if args.is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<_>>()?
        };
        if nums.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "shape parameters must be positive: {text:?}"
            )));
        }
        match (name, nums.as_slice()) {
            ("ball", []) => Ok(ShapeSpec::Ball(1.0)),
            ("ball", [r]) => Ok(ShapeSpec::Ball(*r)),
            ("spheroid", [a, b, c]) => Ok(ShapeSpec::Spheroid(*a, *b, *c)),
            ("cylinder", [r, h]) => Ok(ShapeSpec::Cylinder(*r, *h)),
            _ => Err(bad()),
        }
    }

    fn label(&self) -> String {
        match self {
            ShapeSpec::Ball(r) => format!("ball:{r}"),
            ShapeSpec::Spheroid(a, b, c) => format!("spheroid:{a},{b},{c}"),
            ShapeSpec::Cylinder(r, h) => format!("cylinder:{r},{h}"),
            ShapeSpec::File(p, _) => format!("file:{}", p.display()),
        }
    }

    /// The support body, or `None` for cylinders.
    pub fn body(&self, quad: &SphereQuadrature, lmax: usize) -> Option<SupportBody> {
        match self {
            ShapeSpec::Ball(r) => Some(SupportBody::ball(*r)),
            ShapeSpec::Spheroid(a, b, c) => Some(SupportBody::ellipsoid(quad, lmax, *a, *b, *c)),
            ShapeSpec::Cylinder(..) => None,
            ShapeSpec::File(_, b) => Some(b.clone()),
        }
    }

    pub fn domain(
        &self,
        quad: &SphereQuadrature,
        lmax: usize,
        resolution: usize,
    ) -> Result<VoxelDomain> {
        match self {
            ShapeSpec::Cylinder(r, h) => {
                rasterize_cylinder(&CylinderSpec::upright(*r, *h)?, resolution)
            }
            _ => rasterize(
                &self.body(quad, lmax).expect("support shape"),
                quad,
                resolution,
            ),
        }
    }
}

/// Fully resolved run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: CliCommand,
    pub shape: Option<ShapeSpec>,
    pub resolution: usize,
    pub lmax: usize,
    pub seed: u64,
    pub tol: f64,
    pub out: PathBuf,
    pub axisymmetric: bool,
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self> {
        let c = cli.common;
        let default_resolution = match &cli.command {
            CliCommand::Gamma { .. } => 26,
            CliCommand::Verify { quick: true } => 16,
            _ => 24,
        };
        let resolution = c.resolution.unwrap_or(default_resolution);
        if !(8..=128).contains(&resolution) {
            return Err(Error::InvalidInput(format!(
                "resolution must be in [8, 128], got {resolution}"
            )));
        }
        let lmax = c.lmax.unwrap_or(6);
        if lmax > 12 {
            return Err(Error::InvalidInput(format!(
                "lmax must be in [0, 12], got {lmax}"
            )));
        }
        let tol = c.tol.unwrap_or(1e-6);
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::InvalidInput(format!(
                "tol must be in (0, 1), got {tol}"
            )));
        }
        let shape = match (c.shape, c.body) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidInput(
                    "give either --shape or --body, not both".into(),
                ))
            }
            (Some(s), None) => Some(ShapeSpec::parse(&s)?),
            (None, Some(p)) => {
                if !p.is_file() {
                    return Err(Error::InvalidInput(format!(
                        "body file not found: {}",
                        p.display()
                    )));
                }
                let body = read_support_body(&p)?;
                Some(ShapeSpec::File(p, body))
            }
            (None, None) => None,
        };
        Ok(RunConfig {
            command: cli.command,
            shape,
            resolution,
            lmax,
            seed: c.seed,
            tol,
            out: c.out,
            axisymmetric: c.axisymmetric,
        })
    }

    fn spectral(&self) -> SpectralOptions {
        SpectralOptions {
            seed: self.seed,
            tol: self.tol,
            ..SpectralOptions::default()
        }
    }

    fn shape_or_ball(&self) -> ShapeSpec {
        self.shape.clone().unwrap_or(ShapeSpec::Ball(1.0))
    }
}

const SUBCOMMANDS: [&str; 5] = ["solve", "optimize", "bounds", "gamma", "verify"];

/// Inserts the `--config` file's options right after the subcommand, so that later flags
/// on the command line override them.
fn inject_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = argv.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(&path).map_err(|e| {
        Error::InvalidInput(format!("cannot read config file {}: {e}", path.display()))
    })?;
    let mut extra = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidInput(format!("{}:{}: expected key=value", path.display(), n + 1))
        })?;
        let (key, value) = (key.trim().replace('_', "-"), value.trim());
        if key == "config" {
            return Err(Error::InvalidInput(
                "config files cannot include other config files".into(),
            ));
        }
        match value {
            "true" => extra.push(OsString::from(format!("--{key}"))),
            "false" => {}
            v => extra.push(OsString::from(format!("--{key}={v}"))),
        }
    }
    let at = argv
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .map_or(argv.len(), |i| i + 1);
    let mut out = argv[..at].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}

/// Parses arguments (including the config file) into a validated [`RunConfig`].
pub fn parse_config<I, T>(args: I) -> std::result::Result<RunConfig, String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv =
        inject_config(args.into_iter().map(Into::into).collect()).map_err(|e| e.to_string())?;
    let cli = Cli::try_parse_from(argv).map_err(|e| e.to_string())?;
    RunConfig::from_cli(cli).map_err(|e| e.to_string())
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::EigenNotConverged { .. }
        | Error::PoissonNotConverged { .. }
        | Error::NoPositiveEigenvalue { .. } => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

/// Entry point of the binary; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv = match inject_config(args.into_iter().map(Into::into).collect()) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_CONFIG;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_CONFIG;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    let config = match RunConfig::from_cli(cli) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_CONFIG;
        }
    };
    configure_threads();
    match dispatch(&config, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("BELTRAMI_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        // the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

pub fn dispatch(config: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    std::fs::create_dir_all(&config.out)?;
    match &config.command {
        CliCommand::Solve => cmd_solve(config, out),
        CliCommand::Optimize { .. } => cmd_optimize(config, out),
        CliCommand::Bounds { .. } => cmd_bounds(config, out),
        CliCommand::Gamma { .. } => cmd_gamma(config, out),
        CliCommand::Verify { .. } => cmd_verify(config, out),
    }
}

fn timestamp_line(command: &str) -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# beltrami {command} generated unix={secs}\n")
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp-{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = std::fs::File::create(&tmp).and_then(|mut f| {
        f.write_all(bytes)?;
        f.sync_all()
    });
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(e.into());
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn quad() -> SphereQuadrature {
    SphereQuadrature::fibonacci(DEFAULT_DIRECTIONS)
}

pub fn cmd_solve(config: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let q = quad();
    let shape = config.shape_or_ball();
    let domain = shape.domain(&q, config.lmax, config.resolution)?;
    let handle = OperatorHandle::new(&domain);
    let result = first_positive_mu(&handle, &config.spectral())?;

    let mut report = format!(
        "shape={}\nresolution={}\n",
        shape.label(),
        config.resolution
    );
    let mut lines = Vec::new();
    write_report(&mut lines, &result, &domain)?;
    report.push_str(&String::from_utf8_lossy(&lines));
    let fk = faber_krahn_bound(domain.volume())?;
    writeln!(report, "faber_krahn_ok={}", result.mu1 >= fk).expect("string write");
    if let ShapeSpec::Cylinder(r, h) = shape {
        let b = cylinder_bound(r, h)?;
        writeln!(report, "cylinder_m={}", b.m).expect("string write");
        writeln!(report, "cylinder_mu_lower={}", b.mu_lower).expect("string write");
        writeln!(
            report,
            "bound_ok={}",
            result.mu1 >= b.mu_lower - CYLINDER_BOUND_SLACK
        )
        .expect("string write");
    }
    out.write_all(report.as_bytes())?;
    write_atomic(
        &config.out.join("report.txt"),
        format!("{}{report}", timestamp_line("solve")).as_bytes(),
    )?;

    let mut field = Vec::new();
    write_bfld(
        &mut field,
        &domain,
        &interpolate_to_cells(&domain, &result.eigenfield),
    )?;
    write_atomic(&config.out.join("eigenfield.bfld"), &field)?;
    write_atomic(
        &config.out.join("trace.csv"),
        trace_csv(&domain, &result).as_bytes(),
    )?;
    Ok(EXIT_OK)
}

fn trace_csv(domain: &VoxelDomain, result: &SpectralResult) -> String {
    let g = shape_gradient(domain, result);
    let shift = domain.inner(&result.eigenfield, &result.eigenfield) / (3.0 * domain.volume());
    let weights = boundary_face_weights(domain);
    let mut s = timestamp_line("solve");
    s.push_str("x,y,z,nx,ny,nz,weight,trace_sq,g\n");
    for ((b, w), gv) in domain.boundary_faces().iter().zip(&weights).zip(&g) {
        let c = domain.grid().face_center(b.face);
        let n = b.normal;
        writeln!(
            s,
            "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            c[0],
            c[1],
            c[2],
            n[0],
            n[1],
            n[2],
            w,
            gv + shift,
            gv
        )
        .expect("string write");
    }
    s
}

pub fn cmd_optimize(config: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let CliCommand::Optimize {
        iterations,
        step,
        margin,
        fallback,
        snapshot_every,
    } = config.command.clone()
    else {
        unreachable!("dispatch routes optimize here")
    };
    let q = quad();
    let shape = config.shape_or_ball();
    let initial = shape.body(&q, config.lmax).ok_or_else(|| {
        Error::InvalidInput("optimize needs a support body, not a cylinder".into())
    })?;
    let opt = OptConfig {
        lmax: config.lmax,
        axisymmetric: config.axisymmetric,
        resolution: config.resolution,
        step,
        max_iter: iterations,
        margin,
        seed: config.seed,
        fallback,
        tol: config.tol,
        ..OptConfig::default()
    };
    opt.validate()?;
    let traj = optimize(&opt, &initial, &q);

    let mut csv = timestamp_line("optimize");
    writeln!(
        csv,
        "# shape={} resolution={} lmax={} step={step}",
        shape.label(),
        config.resolution,
        config.lmax
    )
    .expect("string write");
    if let Some(first) = &traj.initial {
        writeln!(
            csv,
            "# initial J={:.12e} mu1={:.12e} V={:.12e}",
            first.j, first.mu1, first.volume
        )
        .expect("string write");
    }
    if let Some(noise) = &traj.noise {
        writeln!(csv, "# noise_band={:.6e}", noise.j_band).expect("string write");
    }
    let stop = match traj.stop {
        StopReason::MaxIterations => "max_iterations",
        StopReason::StepUnderflow => "step_underflow",
        StopReason::GradientFlat => "gradient_flat",
        StopReason::Failed => "failed",
    };
    writeln!(csv, "# stop={stop}").expect("string write");
    let mut rows = Vec::new();
    traj.write_csv(&mut rows)?;
    csv.push_str(&String::from_utf8_lossy(&rows));
    write_atomic(&config.out.join("trajectory.csv"), csv.as_bytes())?;

    if snapshot_every > 0 {
        for r in traj.records.iter().filter(|r| r.iter % snapshot_every == 0) {
            write_atomic(
                &config.out.join(format!("body_{:04}.txt", r.iter)),
                write_support_body(&r.body).as_bytes(),
            )?;
        }
    }
    if let Some(last) = traj.records.last().or(traj.initial.as_ref()) {
        write_atomic(
            &config.out.join("body_final.txt"),
            write_support_body(&last.body).as_bytes(),
        )?;
    }
    for r in &traj.records {
        writeln!(
            out,
            "iter={} J={:.6} mu1={:.6} accepted={}",
            r.iter, r.j, r.mu1, r.accepted
        )?;
    }
    writeln!(out, "stop={stop}")?;
    match &traj.error {
        Some(e) => {
            writeln!(out, "error: {e}")?;
            Ok(exit_code(e))
        }
        None => Ok(EXIT_OK),
    }
}

fn parse_pair(text: &str) -> Result<(f64, f64)> {
    let bad = || {
        Error::InvalidInput(format!(
            "expected --pair R1,R2 as two radii or ball:R1,ball:R2, got {text:?}"
        ))
    };
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(bad());
    }
    let radius = |p: &str| -> Result<f64> {
        let v = p.trim().strip_prefix("ball:").unwrap_or(p.trim());
        v.parse::<f64>()
            .ok()
            .filter(|r| *r > 0.0 && r.is_finite())
            .ok_or_else(bad)
    };
    Ok((radius(parts[0])?, radius(parts[1])?))
}

fn parse_cylinder(text: &str) -> Result<(f64, f64)> {
    match ShapeSpec::parse(&format!("cylinder:{text}"))? {
        ShapeSpec::Cylinder(r, h) => Ok((r, h)),
        _ => unreachable!("cylinder prefix"),
    }
}

pub fn cmd_bounds(config: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let CliCommand::Bounds { cylinder, volume } = &config.command else {
        unreachable!("dispatch routes bounds here")
    };
    let mut report = String::new();
    if let Some(c) = cylinder {
        let (r, h) = parse_cylinder(c)?;
        let b = cylinder_bound(r, h)?;
        writeln!(
            report,
            "cylinder_radius={r}\ncylinder_half_height={h}\nM={}\nmu_lower={}",
            b.m, b.mu_lower
        )
        .expect("string write");
    }
    if let Some(v) = volume {
        writeln!(
            report,
            "volume={v}\nfaber_krahn_bound={}",
            faber_krahn_bound(*v)?
        )
        .expect("string write");
    }
    if let Some(shape) = &config.shape {
        let q = quad();
        let domain = shape.domain(&q, config.lmax, config.resolution)?;
        let v = domain.volume();
        writeln!(
            report,
            "shape={}\nvoxel_volume={v}\nfaber_krahn_bound={}",
            shape.label(),
            faber_krahn_bound(v)?
        )
        .expect("string write");
        match shape {
            ShapeSpec::Cylinder(r, h) => {
                let b = cylinder_bound(*r, *h)?;
                writeln!(report, "M={}\nmu_lower={}", b.m, b.mu_lower).expect("string write");
            }
            ShapeSpec::Ball(r) => {
                writeln!(report, "mu1_exact={}", ball_mu_reference(*r)?).expect("string write");
                trap_lines(
                    &mut report,
                    &shape.body(&q, config.lmax).expect("ball"),
                    &q,
                    config.resolution,
                )?;
            }
            _ => trap_lines(
                &mut report,
                &shape.body(&q, config.lmax).expect("support shape"),
                &q,
                config.resolution,
            )?,
        }
    }
    if report.is_empty() {
        return Err(Error::InvalidInput(
            "bounds needs --cylinder R,h, --volume V or a shape".into(),
        ));
    }
    out.write_all(report.as_bytes())?;
    write_atomic(
        &config.out.join("bounds.txt"),
        format!("{}{report}", timestamp_line("bounds")).as_bytes(),
    )?;
    Ok(EXIT_OK)
}

fn trap_lines(
    report: &mut String,
    body: &SupportBody,
    q: &SphereQuadrature,
    resolution: usize,
) -> Result<()> {
    let (cyl, seg) = enclosing_cylinder(body, q, resolution)?;
    let [l1, l2, l3] = seg.lengths();
    let b = cylinder_bound(cyl.radius, cyl.half_height)?;
    writeln!(
        report,
        "segments_l1={l1}\nsegments_l2={l2}\nsegments_l3={l3}\ntrap_radius={}\ntrap_half_height={}\ntrap_mu_lower={}",
        cyl.radius, cyl.half_height, b.mu_lower
    )
    .expect("string write");
    Ok(())
}

pub fn cmd_gamma(config: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let CliCommand::Gamma {
        pair,
        box_half_width,
        k,
        samples,
    } = &config.command
    else {
        unreachable!("dispatch routes gamma here")
    };
    let (ra, rb) = parse_pair(pair)?;
    if ra.max(rb) > *box_half_width {
        return Err(Error::InvalidInput(format!(
            "balls must fit in the box of half-width {box_half_width}"
        )));
    }
    if *k == 0 {
        return Err(Error::InvalidInput("k is 1-based".into()));
    }
    let bx = BoxDomain::cube(*box_half_width, config.resolution)?;
    let a = bx.ball(ra, [0.0; 3])?;
    let b = bx.ball(rb, [0.0; 3])?;
    let opts = GammaOptions {
        seed: config.seed,
        samples: *samples,
        tol: config.tol,
        ..GammaOptions::default()
    };
    let g = gamma_distance(&bx, &a, &b, &opts)?;
    let method = match g.method {
        GammaMethod::Krylov => "krylov",
        GammaMethod::RandomSampling => "random-sampling",
    };
    let mut report = String::new();
    writeln!(
        report,
        "pair=ball:{ra},ball:{rb}\nbox_half_width={box_half_width}\nspacing={}\nd_gamma={}\nmethod={method}\nresidual={:e}\nsamples={}\nsample_bound={}",
        g.spacing, g.value, g.residual, g.samples, g.sample_bound
    )
    .expect("string write");
    let mut all = true;
    for kk in 1..=*k {
        let r = lipschitz_report(&bx, &a, &b, kk, &g, &opts)?;
        all &= r.holds;
        writeln!(
            report,
            "lambda_{kk}=({},{}) gap={} slack={} holds={}",
            r.lambda_a,
            r.lambda_b,
            (r.lambda_a - r.lambda_b).abs(),
            r.slack,
            r.holds
        )
        .expect("string write");
    }
    writeln!(report, "inequality_ok={all}").expect("string write");
    out.write_all(report.as_bytes())?;
    write_atomic(
        &config.out.join("gamma.txt"),
        format!("{}{report}", timestamp_line("gamma")).as_bytes(),
    )?;
    Ok(EXIT_OK)
}

/// One line of the verify table.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    /// `value <= threshold` when true, `value >= threshold` otherwise.
    pub at_most: bool,
    pub threshold: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        if self.at_most {
            self.value <= self.threshold
        } else {
            self.value >= self.threshold
        }
    }
}

fn at_most(name: &'static str, value: f64, threshold: f64) -> Check {
    Check {
        name,
        value,
        at_most: true,
        threshold,
    }
}

fn at_least(name: &'static str, value: f64, threshold: f64) -> Check {
    Check {
        name,
        value,
        at_most: false,
        threshold,
    }
}

pub fn format_checks(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        let rel = if c.at_most { "<=" } else { ">=" };
        let verdict = if c.passed() { "PASS" } else { "FAIL" };
        writeln!(
            s,
            "{:<24} {:>16.9e} {rel} {:>16.9e}  {verdict}",
            c.name, c.value, c.threshold
        )
        .expect("string write");
    }
    s
}

/// The invariant suite at `resolution` (16 for `--quick`).
pub fn verify_checks(resolution: usize, seed: u64, tol: f64) -> Result<Vec<Check>> {
    let q = quad();
    let opts = SpectralOptions {
        seed,
        tol,
        ..SpectralOptions::default()
    };
    let mu = |d: &VoxelDomain| first_positive_mu(&OperatorHandle::new(d), &opts);
    let mut checks = Vec::new();

    let unit = SupportBody::ball(1.0);
    let d1 = rasterize(&unit, &q, resolution)?;
    let h1 = OperatorHandle::new(&d1);
    let r1 = first_positive_mu(&h1, &opts)?;
    let exact = ball_mu_reference(1.0)?;
    checks.push(at_most(
        "ball_relative_error",
        (r1.mu1 - exact).abs() / exact,
        0.10,
    ));

    for (name, s) in [("scaling_2", 2.0), ("scaling_0.5", 0.5)] {
        let r = mu(&rasterize(&unit.scaled(s), &q, resolution)?)?;
        checks.push(at_most(name, (s * r.mu1 / r1.mu1 - 1.0).abs(), 0.05));
    }

    let inner = rasterize_on(&SupportBody::ball(0.8), &q, *d1.grid())?;
    checks.push(at_least(
        "monotonicity_ratio",
        mu(&inner)?.mu1 / r1.mu1,
        0.98,
    ));

    checks.push(at_least(
        "faber_krahn_ball",
        r1.mu1 - faber_krahn_bound(d1.volume())?,
        -1e-3,
    ));
    let spheroid = SupportBody::ellipsoid(&q, 6, 1.0, 1.0, 1.5);
    let ds = rasterize(&spheroid, &q, resolution)?;
    checks.push(at_least(
        "faber_krahn_spheroid",
        mu(&ds)?.mu1 - faber_krahn_bound(ds.volume())?,
        -1e-3,
    ));

    let dc = rasterize_cylinder(&CylinderSpec::upright(1.0, 1.0)?, resolution)?;
    let rc = mu(&dc)?;
    checks.push(at_least(
        "faber_krahn_cylinder",
        rc.mu1 - faber_krahn_bound(dc.volume())?,
        -1e-3,
    ));
    checks.push(at_least(
        "cylinder_bound",
        rc.mu1 - cylinder_bound(1.0, 1.0)?.mu_lower,
        -CYLINDER_BOUND_SLACK,
    ));

    let u = &r1.eigenfield;
    let identity = (helicity(&h1, u)? * r1.mu1 / d1.inner(u, u) - 1.0).abs();
    checks.push(at_most("helicity_identity", identity, 5.0 * tol));

    let mut rng = SeedTree::new(seed).stream("verify-rayleigh");
    let mut lowest = f64::INFINITY;
    let mut found = 0;
    for _ in 0..40 {
        if found == 5 {
            break;
        }
        // a random mix of the eigenfield and noise keeps the helicity positive often
        let mut w = FaceField::zeros(d1.grid());
        for v in w.as_mut_slice() {
            *v = rng.random_range(-1.0..1.0);
        }
        let norm = d1.norm(&w);
        let mut w = w.scaled(rng.random_range(0.0..1.0) / norm);
        w.axpy(1.0, u);
        if let Some(rq) = rayleigh_upper_bound(&h1, &w)? {
            lowest = lowest.min(rq);
            found += 1;
        }
    }
    checks.push(at_least(
        "rayleigh_minus_mu1",
        lowest - r1.mu1,
        -tol * r1.mu1,
    ));

    let a = SupportBody::ball(1.0);
    let b = spheroid.clone();
    let c = SupportBody::ball(0.7).translated([0.1, 0.0, -0.2]);
    let (ab, ba, bc, ac) = (
        hausdorff_distance(&a, &b, &q),
        hausdorff_distance(&b, &a, &q),
        hausdorff_distance(&b, &c, &q),
        hausdorff_distance(&a, &c, &q),
    );
    let violation = hausdorff_distance(&a, &a, &q)
        .max((ab - ba).abs())
        .max(ac - ab - bc);
    checks.push(at_most("hausdorff_axioms", violation, 1e-12));

    let p = h1.project(&{
        let mut w = FaceField::zeros(d1.grid());
        for v in w.as_mut_slice() {
            *v = rng.random_range(-1.0..1.0);
        }
        w
    })?;
    let mut pp = h1.project(&p)?;
    pp.axpy(-1.0, &p);
    checks.push(at_most(
        "leray_idempotence",
        d1.norm(&pp) / d1.norm(&p),
        1e-9,
    ));

    let bx = BoxDomain::cube(0.65, resolution)?;
    let (ba_, bb_) = (bx.ball(0.5, [0.0; 3])?, bx.ball(0.55, [0.0; 3])?);
    let gopts = GammaOptions {
        seed,
        tol,
        ..GammaOptions::default()
    };
    let g = gamma_distance(&bx, &ba_, &bb_, &gopts)?;
    checks.push(at_least(
        "lipschitz_slack",
        lipschitz_report(&bx, &ba_, &bb_, 1, &g, &gopts)?.slack,
        0.0,
    ));
    Ok(checks)
}

pub fn cmd_verify(config: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let checks = verify_checks(config.resolution, config.seed, config.tol)?;
    let mut report = format!(
        "# resolution={} seed={} tol={:e}\n",
        config.resolution, config.seed, config.tol
    );
    report.push_str(&format_checks(&checks));
    let ok = checks.iter().all(Check::passed);
    writeln!(report, "overall={}", if ok { "PASS" } else { "FAIL" }).expect("string write");
    out.write_all(report.as_bytes())?;
    write_atomic(
        &config.out.join("verify.txt"),
        format!("{}{report}", timestamp_line("verify")).as_bytes(),
    )?;
    Ok(if ok { EXIT_OK } else { EXIT_VERIFY })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(args: &[&str]) -> std::result::Result<RunConfig, String> {
        parse_config(std::iter::once("beltrami").chain(args.iter().copied()))
    }

    #[test]
    fn shapes_parse() {
        assert_eq!(ShapeSpec::parse("ball").unwrap(), ShapeSpec::Ball(1.0));
        assert_eq!(ShapeSpec::parse("ball:0.5").unwrap(), ShapeSpec::Ball(0.5));
        assert_eq!(
            ShapeSpec::parse("spheroid:1,1,1.2").unwrap(),
            ShapeSpec::Spheroid(1.0, 1.0, 1.2)
        );
        assert_eq!(
            ShapeSpec::parse("cylinder:1,2").unwrap(),
            ShapeSpec::Cylinder(1.0, 2.0)
        );
        for bad in [
            "cube",
            "ball:-1",
            "spheroid:1,2",
            "cylinder:x,1",
            "ball:1,2",
        ] {
            assert!(ShapeSpec::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn ranges_are_validated() {
        assert!(cfg(&["solve", "--resolution", "7"]).is_err());
        assert!(cfg(&["solve", "--resolution", "129"]).is_err());
        assert!(cfg(&["solve", "--lmax", "13"]).is_err());
        assert!(cfg(&["solve", "--tol", "0"]).is_err());
        assert!(cfg(&["solve", "--shape", "ball", "--body", "x.txt"]).is_err());
        let c = cfg(&["verify", "--quick"]).unwrap();
        assert_eq!(c.resolution, 16);
        assert_eq!(
            cfg(&["gamma", "--pair", "0.5,0.55"]).unwrap().resolution,
            26
        );
    }

    #[test]
    fn missing_body_names_the_path() {
        let e = cfg(&["solve", "--body", "/no/such/body.txt"]).unwrap_err();
        assert!(e.contains("/no/such/body.txt"), "{e}");
    }

    #[test]
    fn config_file_is_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "# comment\nresolution=20\nlmax=4\naxisymmetric=true\nshape=ball:2\n",
        )
        .unwrap();
        let p = path.to_str().unwrap();
        let c = cfg(&["solve", "--config", p, "--resolution", "30"]).unwrap();
        assert_eq!(c.resolution, 30);
        assert_eq!(c.lmax, 4);
        assert!(c.axisymmetric);
        assert_eq!(c.shape, Some(ShapeSpec::Ball(2.0)));
        std::fs::write(&path, "unknown_key=1\n").unwrap();
        assert!(cfg(&["solve", "--config", p]).is_err());
        std::fs::write(&path, "no equals sign\n").unwrap();
        assert!(cfg(&["solve", "--config", p]).is_err());
    }

    #[test]
    fn exit_codes_by_failure_class() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        assert_eq!(
            run(
                ["beltrami", "solve", "--resolution", "3"],
                &mut out,
                &mut err
            ),
            EXIT_CONFIG
        );
        assert_eq!(
            run(["beltrami", "frobnicate"], &mut out, &mut err),
            EXIT_CONFIG
        );
        assert_eq!(run(["beltrami", "--help"], &mut out, &mut err), EXIT_OK);
        assert_eq!(
            exit_code(&Error::EigenNotConverged {
                iterations: 1,
                residual: 1.0
            }),
            EXIT_SOLVER
        );
        assert_eq!(
            exit_code(&Error::NoPositiveEigenvalue { nev: 4 }),
            EXIT_SOLVER
        );
        assert_eq!(exit_code(&Error::Parse("x".into())), EXIT_CONFIG);
    }

    #[test]
    fn bounds_command_prints_cylinder_values() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Vec::new();
        let code = run(
            [
                "beltrami",
                "bounds",
                "--cylinder",
                "1,1",
                "--out",
                dir.path().to_str().unwrap(),
            ],
            &mut out,
            &mut Vec::new(),
        );
        assert_eq!(code, EXIT_OK);
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("M=14.22477"), "{text}");
        assert!(text.contains("mu_lower=0.8834"), "{text}");
        let file = std::fs::read_to_string(dir.path().join("bounds.txt")).unwrap();
        assert!(file.starts_with("# beltrami bounds generated"));
        assert_eq!(
            run(["beltrami", "bounds"], &mut Vec::new(), &mut Vec::new()),
            EXIT_CONFIG
        );
    }

    #[test]
    fn pair_parsing() {
        assert_eq!(parse_pair("ball:0.5,ball:0.55").unwrap(), (0.5, 0.55));
        assert_eq!(parse_pair("0.5,0.6").unwrap(), (0.5, 0.6));
        assert!(parse_pair("ball:0.5").is_err());
        assert!(parse_pair("cube:1,ball:1").is_err());
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn check_table_is_stable() {
        let checks = [at_most("a", 0.5, 1.0), at_least("b", 0.5, 1.0)];
        let t = format_checks(&checks);
        assert!(t.lines().next().unwrap().ends_with("PASS"));
        assert!(t.lines().nth(1).unwrap().ends_with("FAIL"));
        assert_eq!(t, format_checks(&checks));
    }
}
