use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite sample at index {index} ({context})")]
    NonFinite { index: usize, context: &'static str },

    #[error("field must have zero mean (torus Poisson solvability): mean = {mean:e}, max|f| = {max_abs:e}")]
    NotMeanZero { mean: f64, max_abs: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("CFL violation at step {step}: dt * max|u| / spacing = {courant:.4} > {limit} (max|u| = {max_velocity:e})")]
    Cfl {
        step: usize,
        courant: f64,
        limit: f64,
        max_velocity: f64,
    },

    #[error("non-finite state detected at step {step}")]
    Blowup { step: usize },

    #[error("field has negative values (min {min:e}); split it with split_signed first")]
    NegativeMass { min: f64 },

    #[error("measures must have the same total mass: {mass_a:e} vs {mass_b:e}")]
    MassMismatch { mass_a: f64, mass_b: f64 },

    #[error("combined support {size} exceeds exact-solver limit {limit}; use the Sinkhorn solver")]
    SupportTooLarge { size: usize, limit: usize },

    #[error("Sinkhorn did not converge in {iterations} iterations (marginal violation {violation:e})")]
    SinkhornNotConverged { iterations: usize, violation: f64 },

    #[error("network simplex exceeded {0} pivots")]
    PivotLimit(usize),

    #[error("non-finite particle position at index {index}")]
    ParticleBlowup { index: usize },

    #[error("step-size failure in envelope integration at t = {t:e}")]
    StepSize { t: f64 },

    #[error("bad field container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
