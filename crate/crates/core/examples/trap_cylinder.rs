//! The three nested maximal segments of a convex body and the cylinder they trap it in.

use beltrami::bounds::cylinder_bound;
use beltrami::convex_body::{
    enclosing_cylinder, SphereQuadrature, SupportBody, DEFAULT_DIRECTIONS,
};

fn main() -> beltrami::Result<()> {
    let quad = SphereQuadrature::fibonacci(DEFAULT_DIRECTIONS);
    let bodies = [
        ("ball", SupportBody::ball(1.0)),
        (
            "ellipsoid 2,1,0.5",
            SupportBody::ellipsoid(&quad, 8, 2.0, 1.0, 0.5),
        ),
        (
            "pancake 3,3,0.3",
            SupportBody::ellipsoid(&quad, 8, 3.0, 3.0, 0.3),
        ),
    ];
    for (name, body) in &bodies {
        let (cyl, seg) = enclosing_cylinder(body, &quad, 32)?;
        let [l1, l2, l3] = seg.lengths();
        println!("{name}: |L1|={l1:.3} |L2|={l2:.3} |L3|={l3:.3}");
        println!(
            "  cylinder R={:.3} h={:.3} axis={:.2?}, mu1 >= {:.4}",
            cyl.radius,
            cyl.half_height,
            cyl.axis,
            cylinder_bound(cyl.radius, cyl.half_height)?.mu_lower
        );
    }
    Ok(())
}
