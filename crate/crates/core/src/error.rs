use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature did not converge: estimated error {estimate:e} exceeds target {target:e}")]
    Quadrature { estimate: f64, target: f64 },

    #[error("eigenvalue solver failed: {0}")]
    Eigen(String),

    #[error("mode certification failed: residual {residual:e} at t = {t} exceeds tolerance {tolerance:e}")]
    Certification {
        t: f64,
        residual: f64,
        tolerance: f64,
    },

    #[error("hierarchy with {requested} ADOs exceeds the cap of {cap}")]
    Resource { requested: u128, cap: usize },

    #[error("integration became unstable after t = {last_stable_time}")]
    Unstable { last_stable_time: f64 },

    #[error("ill-posed kernel extraction: {0}")]
    IllPosed(String),

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{task}: {source}")]
    Task {
        task: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn in_task(self, task: impl Into<String>) -> Self {
        Error::Task {
            task: task.into(),
            source: Box::new(self),
        }
    }

    /// True for failures caused by invalid user input rather than numerics.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidParameter { .. }
            | Error::Config(_)
            | Error::Domain(_)
            | Error::Unsupported(_)
            | Error::IllPosed(_) => true,
            Error::Task { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
