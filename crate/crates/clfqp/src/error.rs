use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

/// Everything the command line can fail with. Configuration problems map to
/// exit code 2, the rest to 3.
#[derive(Debug)]
pub enum CliError {
    /// A setting failed validation; `key` is its dotted path in the document.
    Config { key: String, msg: String },
    /// A document could not be read or parsed.
    Parse { path: PathBuf, msg: String },
    /// A document declares a schema version this build does not understand.
    UnsupportedVersion { what: &'static str, found: u32, supported: u32 },
    /// `compare` was handed scenarios on different plants or gaits.
    IncompatibleScenarios(String),
    /// Writing an output failed.
    Write { path: PathBuf, source: io::Error },
    /// The numerical core failed outside of a recorded simulation outcome.
    Core(clfqp_core::Error),
    Internal(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        CliError::Config { key: key.into(), msg: msg.into() }
    }

    pub fn parse(path: &Path, msg: impl fmt::Display) -> Self {
        CliError::Parse { path: path.to_path_buf(), msg: msg.to_string() }
    }

    pub fn write(path: &Path, source: io::Error) -> Self {
        CliError::Write { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. }
            | CliError::Parse { .. }
            | CliError::UnsupportedVersion { .. }
            | CliError::IncompatibleScenarios(_) => 2,
            CliError::Write { .. } | CliError::Core(_) | CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { key, msg } => write!(f, "{key}: {msg}"),
            CliError::Parse { path, msg } => write!(f, "{}: {msg}", path.display()),
            CliError::UnsupportedVersion { what, found, supported } => {
                write!(f, "{what}: schema_version {found} is not supported (expected {supported})")
            }
            CliError::IncompatibleScenarios(why) => write!(f, "incompatible scenarios: {why}"),
            CliError::Write { path, source } => write!(f, "cannot write {}: {source}", path.display()),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Write { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl From<clfqp_core::Error> for CliError {
    fn from(e: clfqp_core::Error) -> Self {
        CliError::Core(e)
    }
}

/// Rejects any schema version other than `supported`.
pub fn check_version(what: &'static str, found: u32, supported: u32) -> Result<()> {
    if found == supported {
        Ok(())
    } else {
        Err(CliError::UnsupportedVersion { what, found, supported })
    }
}
