use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {dim} exceeds the dense-matrix cap {cap}")]
    DimensionOverflow { dim: usize, cap: usize },

    #[error("type-vector enumeration would produce {count} entries (cap {cap})")]
    EnumerationOverflow { count: u128, cap: u128 },

    #[error("traced position {pos} out of range for {n} subsystems")]
    IndexOutOfRange { pos: usize, n: usize },

    #[error("principal deviation eta = {eta} must lie in [0, 1/2)")]
    InvalidDeviation { eta: f64 },

    #[error("spectrum ordering violated: {msg}")]
    SpectrumOrder { msg: String },

    #[error("leading eigenvalue {lambda1} must exceed 1/2")]
    SubcriticalSpectrum { lambda1: f64 },

    #[error("spectral gap violation: lambda_1 = {lambda1} ties lambda_{i} = {lambda_i}")]
    SpectralGap { lambda1: f64, i: usize, lambda_i: f64 },

    #[error("matrix is not Hermitian (max asymmetry {dev:.3e})")]
    NotHermitian { dev: f64 },

    #[error("matrix is not a density matrix: {msg}")]
    NotDensity { msg: String },

    #[error("operator is not exchangeable (max commutator entry {dev:.3e})")]
    NotExchangeable { dev: f64 },

    #[error("target_B = {target} infeasible for dimension {d} (need 1 <= B <= d)")]
    InfeasibleObservable { target: f64, d: usize },

    #[error("estimator requires a successful measurement outcome")]
    FailedOutcome,

    #[error("rejection sampler exceeded {cap} proposals; this indicates a bug")]
    SamplerStuck { cap: u64 },

    #[error("empty estimate list")]
    EmptyEstimates,

    #[error("invalid parameter: {msg}")]
    InvalidParameter { msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
