//! Crate-wide error type. Solver failures that carry state (blow-up, stalled
//! step control) keep the step index and simulation time so reports can name
//! the exact point of failure.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error(
        "kernel under-resolved: scaled support radius {support:.6e} is below \
         the two-cell minimum {min_support:.6e}"
    )]
    UnderResolved { support: f64, min_support: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid norm: {0}")]
    InvalidNorm(String),

    #[error("invalid stepper setup: {0}")]
    InvalidStepper(String),

    #[error(
        "explicit scheme rejected: dt * max(1 + lap)^2 = {stiffness:.3e} exceeds \
         the stability bound {bound}"
    )]
    ExplicitUnstable { stiffness: f64, bound: f64 },

    #[error("non-finite field value at step {step} (t = {time:.6e})")]
    NonFinite { step: usize, time: f64 },

    #[error(
        "step control stalled at step {step} (t = {time:.6e}): energy still \
         increasing after {levels} dt halvings"
    )]
    Stalled { step: usize, time: f64, levels: u32 },

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("bad field file: {0}")]
    BadFieldFile(String),

    #[error("bad kernel table: {0}")]
    BadKernelTable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable tag used in report rows and failure files.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::InvalidDomain(_) => "invalid-domain",
            Error::DomainMismatch(_) => "domain-mismatch",
            Error::InvalidKernel(_) => "invalid-kernel",
            Error::UnderResolved { .. } => "under-resolved",
            Error::InvalidModel(_) => "invalid-model",
            Error::InvalidNorm(_) => "invalid-norm",
            Error::InvalidStepper(_) => "invalid-stepper",
            Error::ExplicitUnstable { .. } => "explicit-unstable",
            Error::NonFinite { .. } => "non-finite",
            Error::Stalled { .. } => "stalled",
            Error::Analysis(_) => "analysis",
            Error::BadFieldFile(_) => "bad-field-file",
            Error::BadKernelTable(_) => "bad-kernel-table",
            Error::Io(_) => "io",
        }
    }
}
