use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing or invalid upstream artifact from stage {0:?}; run it first")]
    Dependency(String),
    #[error("stage {stage:?} was built with a different config (recorded {recorded}, now {current}); rerun with --force")]
    StaleArtifact {
        stage: String,
        recorded: String,
        current: String,
    },
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::StaleArtifact { .. } => 2,
            PipelineError::Dependency(_) => 3,
            PipelineError::Data(_) | PipelineError::Io { .. } => 4,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn data(e: impl std::fmt::Display) -> Self {
        PipelineError::Data(e.to_string())
    }
}
