use thiserror::Error;

/// Errors produced by the simulation, feature, inference and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("implicit system is singular (pivot {pivot:.3e} at row {row})")]
    LinearSolveFailure { row: usize, pivot: f64 },

    #[error("state blew up at ensemble {ensemble}, step {step}: |u| = {magnitude:.3e} exceeds {bound:.3e}")]
    BlowUp {
        ensemble: usize,
        step: usize,
        magnitude: f64,
        bound: f64,
    },

    #[error("unsupported derivative order {order} (max {max})")]
    UnsupportedOrder { order: u32, max: u32 },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("variational precision matrix is singular after jitter escalation")]
    SingularPrecision,

    #[error("exact posterior enumeration requires K <= {max}, got {k}")]
    TooLarge { k: usize, max: usize },

    #[error("ground-truth coefficient vector is all zeros")]
    ZeroTruth,

    #[error("squared-diffusion coefficient {0:.3e} is below -1e-6")]
    NegativeVariance(f64),

    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
