use std::fmt;

/// A command failure and the exit code it maps to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Failure {
    /// Bad input, rejected before any computation. Exit 2.
    Validation(String),
    /// The computation stopped early. Exit 3.
    Runtime(String),
    /// A check ran to completion and did not pass. Exit 1.
    Check(String),
    /// Output could not be written. Exit 1.
    Io(String),
}

impl Failure {
    pub fn validation(msg: impl Into<String>) -> Self {
        Self::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Self::Runtime(msg.into())
    }

    pub fn code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Runtime(_) => 3,
            Self::Check(_) | Self::Io(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Validation(m) => write!(f, "validation failed: {m}"),
            Self::Runtime(m) => write!(f, "run aborted: {m}"),
            Self::Check(m) => write!(f, "check failed: {m}"),
            Self::Io(m) => write!(f, "output error: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
