use thiserror::Error;

/// Construction and parsing failures for the domain types.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("malformed sensor id: {0}")]
    MalformedId(String),
    #[error("{field} out of bounds: {value}")]
    OutOfBounds { field: &'static str, value: f64 },
    #[error("invalid {field}: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("unknown action: {0}")]
    UnknownAction(String),
    #[error("malformed wire record: {0}")]
    Wire(String),
}

/// Failure to load one of the text configuration files.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {what}: {reason}")]
    Parse { what: &'static str, reason: String },
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
}

impl ConfigError {
    pub(crate) fn parse(what: &'static str, reason: impl ToString) -> Self {
        ConfigError::Parse {
            what,
            reason: reason.to_string(),
        }
    }

    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            what,
            reason: reason.into(),
        }
    }
}

/// Reads a whole configuration file, tagging IO failures with the path.
pub fn read_config_file(path: &std::path::Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}
