use thiserror::Error;

/// A single configuration violation. `validate_run_config` collects all of
/// them rather than stopping at the first.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigViolation {
    #[error("non-normalizable state: |lambda| = {0} must be < 1")]
    NonNormalizable(f64),
    #[error("kernel divergence: eta = {0} must lie in (0.5, 1]")]
    KernelDivergence(f64),
    #[error("mean photon number {0} must be finite and >= 0")]
    InvalidMeanPhoton(f64),
    #[error("{name} = {value} is not finite")]
    NonFinite { name: &'static str, value: f64 },
    #[error("n_blocks = {0} must be at least 2")]
    TooFewBlocks(u64),
    #[error("n_samples = {samples} is smaller than n_blocks = {blocks}")]
    TooFewSamples { samples: u64, blocks: u64 },
    #[error("workers must be at least 1")]
    NoWorkers,
    #[error("sweep: {0}")]
    Sweep(String),
    #[error("exactly one of lambda or mean_photon must be given")]
    GainSpecification,
    #[error("n_max = {0} must be at least 2")]
    Truncation(usize),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {}", list(.0))]
    Config(Vec<ConfigViolation>),

    #[error("degenerate state: P(1,1) = 0, no photon pairs")]
    DegenerateState,

    #[error("ill-conditioned denominator: estimated P(1,1) = {0} <= 0")]
    IllConditioned(f64),

    #[error("kernel phase-convention violation: residual imaginary part {imag} (real {real})")]
    ConventionViolation { real: f64, imag: f64 },

    #[error("self-test failed: {0}")]
    SelftestFailed(String),

    #[error("malformed sample dump: {0}")]
    Dump(String),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors coming from the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateState | Error::IllConditioned(_) | Error::ConventionViolation { .. }
        )
    }

    /// Process exit code: 2 for bad input, 3 for numerical failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::Config(_) | Error::Parse(_) => 2,
            Error::DegenerateState
            | Error::IllConditioned(_)
            | Error::ConventionViolation { .. }
            | Error::SelftestFailed(_) => 3,
            Error::Dump(_) | Error::Io(_) | Error::Json(_) => 4,
        }
    }
}

fn list(v: &[ConfigViolation]) -> String {
    v.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
