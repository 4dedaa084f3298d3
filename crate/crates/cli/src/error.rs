use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration.
    #[error("config error: {0}")]
    Config(String),
    /// Input files that fail to parse or describe unusable data.
    #[error("data error: {0}")]
    Data(String),
    #[error("convergence error: {0}")]
    Convergence(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) | CliError::Io { .. } => 2,
            CliError::Convergence(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Prefixes the message with some context, keeping the kind.
    pub(crate) fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{ctx}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{ctx}: {m}")),
            CliError::Convergence(m) => CliError::Convergence(format!("{ctx}: {m}")),
            e @ CliError::Io { .. } => e,
        }
    }
}

impl From<eisdrt::Error> for CliError {
    fn from(e: eisdrt::Error) -> Self {
        use eisdrt::Error as E;
        match e {
            E::Domain(_) | E::Design(_) => CliError::Config(e.to_string()),
            E::Convergence { .. } => CliError::Convergence(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// Like the `From` impl, but treats domain violations as bad input data
/// rather than bad configuration.
pub(crate) fn data_error(e: eisdrt::Error) -> CliError {
    match e {
        eisdrt::Error::Domain(m) => CliError::Data(m),
        other => other.into(),
    }
}
