use std::path::PathBuf;

/// Errors raised by the harness.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}` in section [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("missing section [{0}]")]
    MissingSection(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] derl_core::Error),
    #[error("{0}")]
    Invalid(String),
}

impl LabError {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        LabError::Parse { line, msg: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io { path: path.into(), source }
    }

    /// True for errors caused by the configuration file or its values.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            LabError::Parse { .. } | LabError::UnknownKey { .. } | LabError::MissingSection(_) | LabError::Invalid(_)
        ) || matches!(self, LabError::Core(derl_core::Error::InvalidConfig(_)))
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
