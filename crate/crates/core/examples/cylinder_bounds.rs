//! Closed-form cylinder bound and Faber-Krahn bound next to a computed eigenvalue.

use beltrami::bounds::{cylinder_bound, faber_krahn_bound};
use beltrami::convex_body::CylinderSpec;
use beltrami::grid::rasterize_cylinder;
use beltrami::spectral::{first_positive_mu, OperatorHandle, SpectralOptions};

fn main() -> beltrami::Result<()> {
    for (r, h) in [(1.0, 1.0), (2.0, 0.25), (0.5, 2.0)] {
        let b = cylinder_bound(r, h)?;
        println!("R={r} h={h}: M={:.6} 4pi/M={:.6}", b.m, b.mu_lower);
    }
    // flattening with R h^2 fixed drives the bound up
    for n in [4.0, 16.0, 64.0, 256.0] {
        let b = cylinder_bound(n, 1.0 / f64::sqrt(n))?;
        println!(
            "R={n:>5} h={:.4}: 4pi/M={:.4}",
            1.0 / f64::sqrt(n),
            b.mu_lower
        );
    }

    let domain = rasterize_cylinder(&CylinderSpec::upright(1.0, 1.0)?, 16)?;
    let result = first_positive_mu(&OperatorHandle::new(&domain), &SpectralOptions::default())?;
    println!(
        "C(1,1) at 16 cells: mu1={:.4} >= 4pi/M={:.4}, Faber-Krahn {:.4}",
        result.mu1,
        cylinder_bound(1.0, 1.0)?.mu_lower,
        faber_krahn_bound(domain.volume())?
    );
    Ok(())
}
