use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("space too large: dimension {requested} exceeds limit {limit}")]
    SpaceTooLarge { requested: usize, limit: usize },

    #[error("layout error: {0}")]
    Layout(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("not Hermitian (max |h - h†| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid temperature {0}: must be positive and finite")]
    InvalidTemperature(f64),

    #[error("bad site {site}: scope has {count} factors")]
    BadSite { site: usize, count: usize },

    #[error("not normalized: ket norm {norm}")]
    NotNormalized { norm: f64 },

    #[error("not a density matrix: {0}")]
    NotDensityMatrix(String),

    #[error("perturbation mismatch: {0}")]
    PerturbationMismatch(String),

    #[error("operator not unitary: {0}")]
    OperatorNotUnitary(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unconverged Fock cutoff: {0}")]
    Unconverged(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
