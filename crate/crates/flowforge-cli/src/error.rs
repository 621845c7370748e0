//! Process exit codes and the error type carried out of every subcommand.
//!
//! The contract: 0 = success, 1 = usage error (bad flags, bad config keys,
//! out-of-range values), 2 = I/O error (missing files, unreadable paths),
//! 3 = data integrity error (malformed formats, dimension or indexing
//! mismatches, values a valid run could never produce).

use std::fmt;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_INTEGRITY: i32 = 3;

/// A failed run: the message printed to stderr and the process exit code.
#[derive(Debug)]
pub struct RunError {
    pub code: i32,
    pub message: String,
}

impl RunError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }

    pub fn integrity(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INTEGRITY,
            message: message.into(),
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for RunError {}

/// True when any cause in the error chain is a plain I/O error.
fn chain_contains_io(err: &(dyn std::error::Error + 'static)) -> bool {
    let mut cursor = Some(err);
    while let Some(e) = cursor {
        if e.is::<std::io::Error>() {
            return true;
        }
        cursor = e.source();
    }
    false
}

impl From<flowforge_core::Error> for RunError {
    fn from(err: flowforge_core::Error) -> Self {
        let code = match &err {
            flowforge_core::Error::Io(_) => EXIT_IO,
            // The PNG codec wraps I/O failures (missing file, short read)
            // in its own error type; only genuine decode problems are
            // integrity errors.
            flowforge_core::Error::PngCodec(e) => {
                if chain_contains_io(e) {
                    EXIT_IO
                } else {
                    EXIT_INTEGRITY
                }
            }
            _ => EXIT_INTEGRITY,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(err: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: err.to_string(),
        }
    }
}

/// Attach a path or phase to an error message so the user can tell which
/// of many files a failure came from.
pub trait Context<T> {
    fn context(self, what: impl fmt::Display) -> Result<T, RunError>;
}

impl<T, E: Into<RunError>> Context<T> for Result<T, E> {
    fn context(self, what: impl fmt::Display) -> Result<T, RunError> {
        self.map_err(|e| {
            let base = e.into();
            RunError {
                code: base.code,
                message: format!("{what}: {}", base.message),
            }
        })
    }
}
