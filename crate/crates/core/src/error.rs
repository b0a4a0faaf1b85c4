use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid manifold F = {0}; only F = 3 and F = 4 exist")]
    InvalidManifold(i32),

    #[error("invalid sublevel |F={f}, m={m}>")]
    InvalidSublevel { f: i32, m: i32 },

    #[error("invalid control parameters: {0}")]
    InvalidParameters(String),

    #[error(
        "bias field outside the perturbative regime: |Omega0 / DeltaE_HF| = {ratio:.3e} (limit {limit})"
    )]
    NotPerturbative { ratio: f64, limit: f64 },

    #[error("matrix is not Hermitian (max |A - A^dagger| = {0:.3e})")]
    NonHermitian(f64),

    #[error("eigendecomposition failed to converge")]
    EigenFailure,

    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("state is not normalized (norm = {0})")]
    NotNormalized(f64),

    #[error("norm drift {0:.3e} after propagation exceeds tolerance")]
    NormDrift(f64),

    #[error("invalid optimization config: {0}")]
    InvalidConfig(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("design failed for leg {leg} of progression: {reason}")]
    LegDesign { leg: String, reason: String },

    #[error("degenerate benchmarking data: {0}")]
    DegenerateData(String),

    #[error("decay fit did not converge after {0} iterations")]
    FitNotConverged(usize),

    #[error("invalid benchmarking setup: {0}")]
    InvalidBenchmark(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
