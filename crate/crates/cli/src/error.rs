use std::fmt;

/// Failure with a stable process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_INTERNAL: u8 = 1;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.code {
            EXIT_CONFIG => "config error",
            EXIT_DATA => "data error",
            EXIT_NUMERIC => "numeric error",
            _ => "internal error",
        };
        write!(f, "{kind}: {}", self.message)
    }
}

impl From<bsdb::Error> for CliError {
    fn from(e: bsdb::Error) -> Self {
        let code = match &e {
            bsdb::Error::Config(_) => EXIT_CONFIG,
            bsdb::Error::Data(_) | bsdb::Error::Io { .. } => EXIT_DATA,
            bsdb::Error::Numeric(_) => EXIT_NUMERIC,
            bsdb::Error::Shape { .. } | bsdb::Error::Contract(_) => EXIT_INTERNAL,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
