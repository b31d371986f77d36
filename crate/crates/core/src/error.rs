use thiserror::Error;

/// Errors raised across the simulation, estimation and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function it was passed to.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is missing or violates an invariant.
    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// A numerical routine failed to reach its tolerance.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A quadrant-detector difference signal reached +/-1 and cannot be inverted.
    #[error("quadrant detector saturated (normalized signal {signal})")]
    Saturation { signal: f64 },

    #[error("calibration fit failed: {0}")]
    Fit(String),

    #[error("two-source curve cannot be built: {0}")]
    Symmetrization(String),

    #[error("invalid input: {0}")]
    Input(String),

    /// Failure while processing one separation of a campaign.
    #[error("separation #{index} ({separation_um} um): {source}")]
    AtSeparation {
        index: usize,
        separation_um: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user-supplied configuration or input files.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config { .. }
            | Error::Unsupported(_)
            | Error::Input(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Domain(_) => true,
            Error::AtSeparation { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
