//! Operator distance between nested balls in a box and the reciprocal-eigenvalue
//! Lipschitz inequality.

use beltrami::gamma::{gamma_distance, lipschitz_report, BoxDomain, GammaOptions};

fn main() -> beltrami::Result<()> {
    let bx = BoxDomain::cube(0.65, 20)?;
    let opts = GammaOptions::default();
    let inner = bx.ball(0.5, [0.0; 3])?;
    for r in [0.55, 0.6] {
        let outer = bx.ball(r, [0.0; 3])?;
        let g = gamma_distance(&bx, &inner, &outer, &opts)?;
        let lip = lipschitz_report(&bx, &inner, &outer, 1, &g, &opts)?;
        println!(
            "0.5 vs {r}: d_gamma={:.5} (samples reach {:.5}), |1/mu - 1/mu'|={:.5}, slack={:.5}",
            g.value,
            g.sample_bound,
            (lip.lambda_a - lip.lambda_b).abs(),
            lip.slack
        );
    }
    Ok(())
}
