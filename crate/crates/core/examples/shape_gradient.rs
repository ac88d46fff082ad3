//! Shape-gradient check: central differences of `J` against the boundary integral, for a
//! prolate P2 perturbation of the ball.

use beltrami::convex_body::{SphereQuadrature, SupportBody, DEFAULT_DIRECTIONS};
use beltrami::shape_opt::{gradient_check, objective, optimality_diagnostic, DiagnosticThresholds};
use beltrami::spectral::SpectralOptions;

fn main() -> beltrami::Result<()> {
    let quad = SphereQuadrature::fibonacci(DEFAULT_DIRECTIONS);
    let ball = SupportBody::ball(1.0);
    let opts = SpectralOptions::default();

    let obj = objective(&ball, &quad, 16, &opts)?;
    let d = optimality_diagnostic(
        &obj.domain,
        &obj.result,
        &DiagnosticThresholds {
            variance: 1e-2,
            min_trace: 1e-3,
        },
    );
    println!(
        "ball: J={:.4} trace variance={:.3} min trace={:.4} flag={}",
        obj.j, d.variance, d.min_trace, d.ph_flag
    );

    let dh = SupportBody::fit(&quad, 2, true, |v| 0.3 * (3.0 * v[2] * v[2] - 1.0));
    let check = gradient_check(&ball, &dh, 0.15, &quad, 2.0 / 16.0, &opts)?;
    println!(
        "dJ: finite difference {:.4}, boundary integral {:.4}, ratio {:.3}",
        check.finite_difference,
        check.predicted,
        check.ratio()
    );
    Ok(())
}
