use thiserror::Error;

/// Failure modes of the thermodynamic solves, the closure generation and the
/// time-marching solver. Variants carry enough context to name the violated
/// rule in CLI output.
#[derive(Debug, Error)]
pub enum MixError {
    #[error("degenerate partial specific volumes: {0}")]
    DegenerateVolumes(String),

    #[error("basis matrix numerically singular (condition number {cond:.3e} > {limit:.1e})")]
    SingularBasis { cond: f64, limit: f64 },

    #[error("non-positive density: {0}")]
    NonpositiveDensity(String),

    #[error("Newton iteration did not converge: {0}")]
    NewtonDivergence(String),

    #[error("total mass density {value} outside admissible interval ({lo}, {hi})")]
    ThresholdViolation { value: f64, lo: f64, hi: f64 },

    #[error("volume constraint violated: {0}")]
    ConstraintViolation(String),

    #[error("degenerate transport closure: {0}")]
    DegenerateClosure(String),

    #[error("CFL condition violated: dt*max|v|/dx = {number:.6e} > {limit}")]
    CflViolation { number: f64, limit: f64 },

    #[error(
        "density threshold breached at t = {time:.6e}, cell {cell}: varrho = {value:.17e} \
         within guard band of ({lo}, {hi})"
    )]
    ThresholdBreach {
        time: f64,
        cell: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("linear block system singular or not solved to tolerance: {0}")]
    SingularBlock(String),

    #[error("Picard iteration diverged after {sweeps} sweeps (last increment {increment:.6e})")]
    PicardDivergence { sweeps: usize, increment: f64 },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("config validation error: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MixError>;
