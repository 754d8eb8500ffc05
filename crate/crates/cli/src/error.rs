use std::fmt;
use std::path::Path;

use ceiq::CeiqError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const PARSE: i32 = 4;
    pub const NUMERIC: i32 = 5;
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Parse(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Io(_) => exit::IO,
            CliError::Parse(_) => exit::PARSE,
            CliError::Numeric(_) => exit::NUMERIC,
        }
    }

    pub(crate) fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Parse(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CeiqError> for CliError {
    fn from(e: CeiqError) -> Self {
        let msg = e.to_string();
        match e {
            CeiqError::InvalidArgument(_) => CliError::Usage(msg),
            CeiqError::Degenerate(_) | CeiqError::NotConverged { .. } => CliError::Numeric(msg),
            CeiqError::Parse { .. } => CliError::Parse(msg),
            CeiqError::UnsupportedImage { .. } | CeiqError::Decode { .. } | CeiqError::Io { .. } => CliError::Io(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
