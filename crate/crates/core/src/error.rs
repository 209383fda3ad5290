use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("invalid date {0:?}: expected YYYY-MM-DD, DD/MM/YYYY or an integer day offset")]
    Date(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("no contact data for cluster {0}")]
    NoContactData(String),

    #[error("contact entry for respondent {respondent} at {location} has a resolved village but no count; run imputation first")]
    UnresolvedCount { respondent: String, location: String },

    #[error("contact entry for respondent {respondent} at {location} has no village; run imputation first")]
    UnresolvedVillage { respondent: String, location: String },

    #[error("design degenerate at time {time}: {cause}")]
    DegenerateDesign { time: f64, cause: String },

    #[error("tied event times at {0} remain after jittering")]
    TiedEvents(f64),

    #[error("no events at or before time {0}")]
    NoEvents(f64),

    #[error("model fit failed: {0}")]
    Fit(String),

    #[error("horizon {requested} lies beyond the simulated range {available}")]
    HorizonOutOfRange { requested: f64, available: f64 },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| match e {
            Error::Stage { .. } => e,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// True for failures of the environment (files, formats, configuration)
    /// rather than of the analysis itself.
    pub fn is_io_or_config(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_io_or_config();
        }
        matches!(
            self,
            Error::Io { .. } | Error::Csv { .. } | Error::Date(_) | Error::Config(_)
        )
    }
}
