use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("photon number {n} outside truncation 0..={n_max}")]
    OutOfRange { n: usize, n_max: usize },

    #[error("cutoff too small for {what}: defect {defect:.3e} exceeds {tol:.1e}")]
    CutoffTooSmall {
        what: &'static str,
        defect: f64,
        tol: f64,
    },

    #[error("ill-conditioned inversion: condition number {cond:.3e}")]
    IllConditioned { cond: f64 },

    #[error("{stage} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        stage: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("probability {value} outside [0, 1]")]
    InvalidProbability { value: f64 },

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::OutOfRange { .. } => "out_of_range",
            Error::CutoffTooSmall { .. } => "cutoff_too_small",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::NonConvergence { .. } => "non_convergence",
            Error::InvalidProbability { .. } => "invalid_probability",
            Error::Ingestion(_) => "ingestion",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Stage { source, .. } => source.kind(),
        }
    }

    /// Pipeline stage that raised the error, if recorded.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

/// Tags errors with the pipeline stage they came from.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            Error::Stage { .. } => e,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        })
    }
}
