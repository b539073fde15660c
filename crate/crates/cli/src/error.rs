use std::path::PathBuf;

/// Failure classes mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Missing(PathBuf),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Missing(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Missing(p) => write!(f, "missing artifact: {}", p.display()),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ea_core::Error> for CliError {
    fn from(e: ea_core::Error) -> Self {
        match e {
            ea_core::Error::MissingArtifact(p) => CliError::Missing(p),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
