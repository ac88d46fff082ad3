//! Support-function bodies: fitting, the convexity certificate, Hausdorff distances and the
//! text format.

use beltrami::convex_body::{
    diameter, hausdorff_distance, is_convex_valid, parse_support_body, project_to_convex, volume,
    write_support_body, SphereQuadrature, SupportBody, DEFAULT_DIRECTIONS,
};

fn main() -> beltrami::Result<()> {
    let quad = SphereQuadrature::fibonacci(DEFAULT_DIRECTIONS);
    let ball = SupportBody::ball(1.0);
    let prolate = SupportBody::ellipsoid(&quad, 8, 1.0, 1.0, 1.5);

    let cert = is_convex_valid(&prolate, &quad, 1e-6);
    println!(
        "prolate: valid={} min eigen={:.4}",
        cert.valid, cert.min_eigen
    );
    println!(
        "prolate: diameter={:.4} voxel volume={:.4}",
        diameter(&prolate, &quad),
        volume(&prolate, &quad, 32)
    );
    println!(
        "d_H(ball, prolate) = {:.4}",
        hausdorff_distance(&ball, &prolate, &quad)
    );

    // a strong P2 dent is not convex; damping restores the certificate
    let mut c = prolate.coeffs().to_vec();
    c[6] -= 2.0;
    let dented = SupportBody::new(8, c, true)?;
    let fixed = project_to_convex(&dented, &quad, 1e-6)?;
    println!(
        "dented: valid={} -> projected valid={}",
        is_convex_valid(&dented, &quad, 1e-6).valid,
        is_convex_valid(&fixed, &quad, 1e-6).valid
    );

    let text = write_support_body(&fixed);
    assert_eq!(parse_support_body(&text)?, fixed);
    println!("{}", text.lines().take(4).collect::<Vec<_>>().join("\n"));
    Ok(())
}
