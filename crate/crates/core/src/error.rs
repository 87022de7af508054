use thiserror::Error;

/// Crate-wide error type. Variants carry enough context to be actionable
/// and map onto the CLI exit-code classes: `Config` is a usage error,
/// `Infeasible`/`Unattainable` mean no stabilizing solution at the requested
/// attenuation level, everything else is a numerical failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix required to be symmetric deviated beyond tolerance.
    #[error("asymmetry beyond tolerance in {context}: relative deviation {deviation:.3e}")]
    Asymmetry { context: String, deviation: f64 },

    #[error("no unique solution: {0}")]
    NoUniqueSolution(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// No stabilizing Riccati solution exists at this attenuation level.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The doubling search exhausted the allowed attenuation range.
    #[error("attenuation level unattainable: {0}")]
    Unattainable(String),

    /// Antiderivative requested for a function with nonzero mean.
    #[error("nonzero mean: {0}")]
    NonZeroMean(String),

    /// The vibration-phase change of variables is too ill-conditioned to use.
    #[error("transform ill-conditioned: {0}")]
    Transform(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Trajectory integration blew up.
    #[error("divergent integration: {0}")]
    Divergence(String),

    /// Bisection verdicts were not monotone in gamma.
    #[error("inconsistent feasibility verdicts: {0}")]
    Inconsistent(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code class for the CLI: 1 infeasible, 2 numerical
    /// failure (and i/o), 3 configuration/usage.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) | Error::Unattainable(_) => 1,
            Error::Config(_) => 3,
            _ => 2,
        }
    }
}
