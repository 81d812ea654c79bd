use thiserror::Error;

/// Errors raised across the analysis pipeline.
#[derive(Debug, Error)]
pub enum NtsError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("no eigenvalue chains: every eigenvalue of the difference matrix is zero")]
    NoChains,

    #[error("root on contour: |det| fell below the boundary tolerance after {retries} inflations")]
    RootOnContour { retries: usize },

    #[error("phase tracking did not converge at subdivision depth {depth}")]
    PhaseTracking { depth: usize },

    #[error("winding number {raw} is not close to an integer")]
    NonIntegerWinding { raw: f64 },

    #[error("simulation blew up at t = {time}")]
    BlowUp { time: f64 },

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("controllability time undefined: {0}")]
    NotControllable(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NtsError>;
