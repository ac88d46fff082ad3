//! First positive curl eigenvalue of the unit ball against the exact value.
//!
//! `cargo run --release --example solve_ball -- 24`

use beltrami::bounds::ball_mu_reference;
use beltrami::convex_body::{SphereQuadrature, SupportBody, DEFAULT_DIRECTIONS};
use beltrami::grid::rasterize;
use beltrami::spectral::{first_positive_mu, helicity, OperatorHandle, SpectralOptions};

fn main() -> beltrami::Result<()> {
    let resolution = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(16);
    let quad = SphereQuadrature::fibonacci(DEFAULT_DIRECTIONS);
    let domain = rasterize(&SupportBody::ball(1.0), &quad, resolution)?;
    let handle = OperatorHandle::new(&domain);
    let result = first_positive_mu(&handle, &SpectralOptions::default())?;

    let exact = ball_mu_reference(1.0)?;
    println!("cells        {}", domain.cell_count());
    println!("mu1          {:.6}", result.mu1);
    println!("exact        {exact:.6}");
    println!(
        "rel. error   {:.3}%",
        100.0 * (result.mu1 - exact).abs() / exact
    );
    println!("multiplicity {}", result.cluster.len());
    let u = &result.eigenfield;
    println!(
        "H(u) mu1/|u|^2 = {:.12}",
        helicity(&handle, u)? * result.mu1 / domain.inner(u, u)
    );
    Ok(())
}
