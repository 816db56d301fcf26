use std::fmt;

/// Failure classes with their process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration, arguments or input files (exit code 2).
    Validation,
    /// Anything that fails while running (exit code 1).
    Runtime,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Validation,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Runtime,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => 2,
            ErrorKind::Runtime => 1,
        }
    }
}

impl fmt::Display for CliError {
    /// Single line: `error[validation]: …` or `error[runtime]: …`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ErrorKind::Validation => "validation",
            ErrorKind::Runtime => "runtime",
        };
        let one_line = self.message.replace(['\n', '\r'], " ");
        write!(f, "error[{kind}]: {one_line}")
    }
}

impl std::error::Error for CliError {}

impl From<latprot_core::Error> for CliError {
    fn from(e: latprot_core::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Attaches a validation context to a core error.
pub fn invalid<T>(context: &str, r: latprot_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::validation(format!("{context}: {e}")))
}
