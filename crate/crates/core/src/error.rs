use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure categories; `kind()` groups them for exit-code mapping.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{quantity} = {value} is outside {domain}")]
    Domain {
        quantity: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("truncation at cutoff {cutoff} leaves tail mass {tail:.3e} (bound {bound:.3e}); raise the cutoff")]
    Truncation {
        cutoff: usize,
        tail: f64,
        bound: f64,
    },

    #[error("Hermite order {order} exceeds the stability limit {limit}")]
    HermiteOrder { order: usize, limit: usize },

    #[error("quadrature did not converge (residual estimate {residual:.3e})")]
    Quadrature { residual: f64 },

    #[error(
        "mean {mean_per_window:.3} photons per response window exceeds the budget of {budget}"
    )]
    SaturationRisk { mean_per_window: f64, budget: usize },

    #[error("packet format: {0}")]
    Format(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("fit did not converge after {iterations} iterations (final cost {cost:.6e})")]
    FitNonConvergence {
        iterations: usize,
        cost: f64,
        trace: Vec<[f64; 5]>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Format,
    Calibration,
    Convergence,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_)
            | Error::Domain { .. }
            | Error::Truncation { .. }
            | Error::HermiteOrder { .. }
            | Error::SaturationRisk { .. }
            | Error::Degenerate(_) => ErrorKind::Input,
            Error::Format(_) | Error::Json(_) => ErrorKind::Format,
            Error::Calibration(_) => ErrorKind::Calibration,
            Error::Quadrature { .. } | Error::FitNonConvergence { .. } => ErrorKind::Convergence,
            Error::Io(_) => ErrorKind::Io,
        }
    }
}
