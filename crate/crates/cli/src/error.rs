use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("invalid manifest: {0}")]
    ManifestInvalid(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: aerorecog_core::Error,
    },
    #[error("{stage}: {message}")]
    Io {
        stage: &'static str,
        message: String,
    },
}

/// Machine-readable error printed on stderr.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: String,
    pub stage: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid(_) => 2,
            CliError::ManifestInvalid(_) => 3,
            CliError::Stage { .. } | CliError::Io { .. } => 1,
        }
    }

    pub fn report(&self) -> ErrorReport {
        let (error, stage) = match self {
            CliError::ConfigInvalid(_) => ("ConfigInvalid".to_string(), None),
            CliError::ManifestInvalid(_) => ("ManifestInvalid".to_string(), None),
            CliError::Stage { stage, source } => {
                (source.kind().to_string(), Some(stage.to_string()))
            }
            CliError::Io { stage, .. } => ("Io".to_string(), Some(stage.to_string())),
        };
        ErrorReport {
            error,
            stage,
            message: self.to_string(),
        }
    }
}

/// Tags core errors with the stage that raised them.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> StageContext<T> for aerorecog_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}

impl<T> StageContext<T> for std::io::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Io {
            stage,
            message: e.to_string(),
        })
    }
}

impl<T> StageContext<T> for serde_json::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Io {
            stage,
            message: e.to_string(),
        })
    }
}
