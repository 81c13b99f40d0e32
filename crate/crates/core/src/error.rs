//! Error type shared by every stage, with the CLI exit-code mapping.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("infeasible current: {0}")]
    Infeasible(String),

    #[error("loss of ellipticity: last accepted load fraction {last_good_mu:.6}, max |grad| {last_good_max_grad:.9}")]
    LossOfEllipticity { last_good_mu: f64, last_good_max_grad: f64 },

    #[error("newton iteration diverged at load fraction {mu:.6} (residual {residual:.3e})")]
    NewtonDivergence { mu: f64, residual: f64 },

    #[error("max |grad| {value:.9} attained at ({x:.6}, {y:.6}), away from the boundary band")]
    InteriorMaximum { x: f64, y: f64, value: f64 },

    #[error("reduced current {jr} outside the subcritical range")]
    InvalidReducedCurrent { jr: f64 },

    #[error("corrected profile iteration failed to contract after {iterations} steps (update norm {norm:.3e})")]
    ContractionFailure { iterations: usize, norm: f64 },

    #[error("convex minimization did not converge after {iterations} steps (gradient norm {gradient:.3e})")]
    MinimizerFailure { iterations: usize, gradient: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("resolution: {0}")]
    Resolution(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) => 2,
            Error::Config(_) | Error::Geometry(_) | Error::Resolution(_) | Error::Io(_) => 4,
            _ => 3,
        }
    }
}
