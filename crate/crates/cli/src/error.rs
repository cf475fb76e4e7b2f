//! Failure kinds and their process exit codes.

use std::fmt;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad flags, bad configuration or inputs that do not fit together.
    Usage,
    /// A verification ran and exceeded its tolerance.
    Tolerance,
    /// Reading or writing a file failed, or a file is malformed.
    Io,
}

impl Kind {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Kind::Usage => 1,
            Kind::Tolerance => 2,
            Kind::Io => 3,
        })
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Usage,
            message: message.into(),
        }
    }

    pub fn tolerance(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Tolerance,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Io,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<moe_lab::Error> for CliError {
    fn from(e: moe_lab::Error) -> Self {
        let kind = match e {
            moe_lab::Error::Io(_) | moe_lab::Error::Format { .. } => Kind::Io,
            _ => Kind::Usage,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches the offending path to I/O failures.
pub trait PathContext<T> {
    fn at(self, path: &std::path::Path) -> CliResult<T>;
}

impl<T, E: Into<CliError>> PathContext<T> for Result<T, E> {
    fn at(self, path: &std::path::Path) -> CliResult<T> {
        self.map_err(|e| {
            let mut e: CliError = e.into();
            let shown = path.display().to_string();
            if !e.message.contains(&shown) {
                e.message = format!("{shown}: {}", e.message);
            }
            e
        })
    }
}
