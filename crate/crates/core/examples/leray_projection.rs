//! Discrete Leray projection on a rasterized spheroid, and a BFLD dump of the result.

use beltrami::convex_body::{SphereQuadrature, SupportBody, DEFAULT_DIRECTIONS};
use beltrami::grid::{
    discrete_divergence, interpolate_to_cells, leray_project, rasterize, write_bfld, FaceField,
};

fn main() -> beltrami::Result<()> {
    let quad = SphereQuadrature::fibonacci(DEFAULT_DIRECTIONS);
    let body = SupportBody::ellipsoid(&quad, 6, 1.0, 0.8, 1.3);
    let domain = rasterize(&body, &quad, 20)?;
    let f = FaceField::sample(domain.grid(), |x| {
        [x[1] * x[2], x[0] + x[2] * x[2], x[0] * x[1] * x[2]]
    });
    let p = leray_project(&domain, &f)?;
    let div = discrete_divergence(&domain, &p)
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()));
    let boundary = domain
        .boundary_faces()
        .iter()
        .fold(0.0f64, |m, b| m.max(p.as_slice()[b.face].abs()));
    println!(
        "cells {} interior faces {}",
        domain.cell_count(),
        domain.interior_faces().len()
    );
    println!(
        "|f| = {:.4}  |Pf| = {:.4}",
        domain.norm(&f),
        domain.norm(&p)
    );
    println!("max |div Pf| = {div:.2e}, max boundary flux = {boundary:.2e}");

    let path = std::env::temp_dir().join("leray_projection.bfld");
    write_bfld(
        std::fs::File::create(&path)?,
        &domain,
        &interpolate_to_cells(&domain, &p),
    )?;
    println!("wrote {}", path.display());
    Ok(())
}
