//! The invariant suite behind `beltrami verify --quick`.

use beltrami::cli::{format_checks, verify_checks};

fn main() -> beltrami::Result<()> {
    let checks = verify_checks(16, 0, 1e-6)?;
    print!("{}", format_checks(&checks));
    println!("all passed: {}", checks.iter().all(|c| c.passed()));
    Ok(())
}
