use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("series length mismatch: expected {expected}, found {found} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("initial covariance is not positive semidefinite")]
    NonPsdCovariance,

    #[error("innovation covariance is singular at step {step} (S = {value})")]
    SingularInnovation { step: usize, value: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("all {0} restarts diverged")]
    AllRestartsDiverged(usize),

    #[error("collinear design matrix: {0}")]
    Collinear(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("disturbance kind mismatch: {0}")]
    KindMismatch(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("missing {what}: {path}")]
    Missing { what: &'static str, path: String },

    #[error("unsupported format version {found} in {what} (expected {expected})")]
    Version { what: String, found: u32, expected: u32 },

    #[error("lineage mismatch: {0}")]
    Lineage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Net(#[from] greybox_nnet::NetError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::NonPsdCovariance => "non_psd_covariance",
            Error::SingularInnovation { .. } => "singular_innovation",
            Error::NonFinite(_) => "non_finite",
            Error::AllRestartsDiverged(_) => "all_restarts_diverged",
            Error::Collinear(_) => "collinear",
            Error::InsufficientData(_) => "insufficient_data",
            Error::KindMismatch(_) => "kind_mismatch",
            Error::Parse { .. } => "parse",
            Error::Missing { what: "model", .. } => "missing_model",
            Error::Missing { .. } => "missing_input",
            Error::Version { .. } => "version_mismatch",
            Error::Lineage(_) => "lineage_mismatch",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Net(_) => "net",
        }
    }
}
