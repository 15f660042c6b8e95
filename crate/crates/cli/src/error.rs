use thiserror::Error;

/// Failures surfaced by a CLI run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Numerical(randskew::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) | CliError::Parse { .. } => 2,
            CliError::Numerical(e) if is_data_error(e) => 2,
            CliError::Numerical(_) => 3,
            CliError::Config(_) => 4,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CliError::Io(_) => "IoError",
            CliError::Parse { .. } => "ParseError",
            CliError::Config(_) => "ConfigError",
            CliError::Numerical(e) => e.name(),
        }
    }

    pub fn io(context: impl std::fmt::Display, err: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

fn is_data_error(e: &randskew::Error) -> bool {
    matches!(
        e,
        randskew::Error::LabelDomain { .. } | randskew::Error::NonFinite(_)
    )
}

impl From<randskew::Error> for CliError {
    fn from(e: randskew::Error) -> Self {
        CliError::Numerical(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
