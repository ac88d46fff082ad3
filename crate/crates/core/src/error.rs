use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty domain: {0}")]
    EmptyDomain(String),

    #[error("Poisson solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    PoissonNotConverged { iterations: usize, residual: f64 },

    #[error("eigensolver did not converge after {iterations} cycles (worst relative residual {residual:.3e})")]
    EigenNotConverged { iterations: usize, residual: f64 },

    #[error("no positive eigenvalue among the {nev} extreme eigenvalues; resolution too coarse?")]
    NoPositiveEigenvalue { nev: usize },

    #[error("cannot restore convexity at margin {margin:e}: even the ball has min eigenvalue {min_eigen:e}")]
    ProjectionFailed { margin: f64, min_eigen: f64 },

    #[error(
        "containment certificate failed at {point:?} (excess {excess:.3e}); increase resolution"
    )]
    Containment { point: [f64; 3], excess: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
