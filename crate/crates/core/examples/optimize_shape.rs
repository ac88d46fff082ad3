//! A few descent steps on `|Omega|^{1/3} mu_1` from the ball, printed as CSV.
//!
//! `cargo run --release --example optimize_shape -- 5`

use beltrami::convex_body::{SphereQuadrature, SupportBody, DEFAULT_DIRECTIONS};
use beltrami::shape_opt::{optimize, OptConfig};

fn main() -> beltrami::Result<()> {
    let iterations = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3);
    let quad = SphereQuadrature::fibonacci(DEFAULT_DIRECTIONS);
    let config = OptConfig {
        resolution: 16,
        max_iter: iterations,
        ..OptConfig::default()
    };
    let traj = optimize(&config, &SupportBody::ball(1.0), &quad);
    if let Some(e) = &traj.error {
        eprintln!("stopped early: {e}");
    }
    if let (Some(start), Some(noise)) = (&traj.initial, &traj.noise) {
        println!("# start J={:.5}, noise band {:.2e}", start.j, noise.j_band);
    }
    traj.write_csv(std::io::stdout())?;
    println!("# stop: {:?}", traj.stop);
    Ok(())
}
