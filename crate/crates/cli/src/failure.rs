use std::fmt;
use std::process::ExitCode;

/// Errors mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad config, flags or input: exit 1.
    Validation(String),
    /// Divergence, NaN or a failed numerical check: exit 2.
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Validation(_) => ExitCode::from(1),
            Failure::Numerical(_) => ExitCode::from(2),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "validation error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<lru_core::Error> for Failure {
    fn from(e: lru_core::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}
