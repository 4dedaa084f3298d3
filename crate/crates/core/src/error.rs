use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument or model parameter lies outside its valid domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The model has no relaxation process to describe.
    #[error("degenerate model: {0}")]
    Degenerate(String),

    /// The requested multisine cannot be realized on the sampling grid.
    #[error("multisine design error: {0}")]
    Design(String),

    /// The model impedance vanishes at an excited tone.
    #[error("singular channel at {freq_hz} Hz")]
    SingularChannel { freq_hz: f64 },

    /// The averaged output spectrum is too small to divide by at an excited bin.
    #[error("output dropout at bin {bin} ({freq_hz} Hz)")]
    Dropout { bin: usize, freq_hz: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The iterative solver hit its iteration cap. Carries the best iterate.
    #[error("solver did not converge after {iterations} iterations (KKT residual {kkt_residual:e})")]
    Convergence { iterations: usize, kkt_residual: f64, best: Vec<f64> },

    #[error("singular fit: {0}")]
    SingularFit(String),
}
