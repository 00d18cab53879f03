//! Peak detection and post-selection inference for peaks of smooth Gaussian
//! random fields.
//!
//! The crate simulates lattice realizations of `Y = mu + eps`, extracts local
//! maxima, calibrates a truncated-Gaussian significance test and builds
//! confidence regions for the location and height of detected peaks, with
//! randomized (carving and splitting) variants. Kac-Rice approximations in
//! [`theory`] serve as analytic oracles, and [`harness`] runs the Monte Carlo
//! experiments.

pub mod detect;
pub mod field;
pub mod harness;
pub mod infer;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod peaks;
pub mod randomized;
pub mod special;
pub mod theory;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("curvature too low: lambda_n = {0} must exceed 1")]
    CurvatureTooLow(f64),
    #[error("kernel matrix ill-conditioned: factorization failed at jitter {0:e}")]
    IllConditionedKernel(f64),
    #[error("selection violated: observed height {y} does not exceed threshold {u}")]
    SelectionViolated { y: f64, u: f64 },
    #[error("negative Hessian estimate is not positive definite")]
    DegenerateHessian,
    #[error("symmetrized carve precision is not positive definite")]
    DegenerateCarvePrecision,
    #[error("no candidate peak to match")]
    NoMatch,
    #[error("argument outside the validity window: {0}")]
    Window(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("run failed: {0}")]
    RunFailed(String),
}

impl Error {
    /// Stable machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Model(_) => "model",
            Error::Parameter(_) => "parameter",
            Error::CurvatureTooLow(_) => "curvature_too_low",
            Error::IllConditionedKernel(_) => "ill_conditioned_kernel",
            Error::SelectionViolated { .. } => "selection_violated",
            Error::DegenerateHessian => "degenerate_hessian",
            Error::DegenerateCarvePrecision => "degenerate_carve_precision",
            Error::NoMatch => "no_match",
            Error::Window(_) => "window",
            Error::Numerical(_) => "numerical",
            Error::Io(_) => "io",
            Error::RunFailed(_) => "run_failed",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
