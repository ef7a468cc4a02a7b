//! Command-line front end: config ingestion, scenario execution, unit
//! conversion, and CSV/JSON artifact emission.

pub mod config;
pub mod output;
pub mod scenarios;
pub mod units;

use std::fmt;

/// User mistakes exit 1, solver or capacity failures exit 2.
#[derive(Debug)]
pub enum CliError {
    User(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::User(_) => "user",
            CliError::Numerical(_) => "numerical",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::User(m) | CliError::Numerical(m) => m,
        }
    }

    /// One-line JSON shape for scripted callers.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.message() } })
            .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<qst_core::Error> for CliError {
    fn from(e: qst_core::Error) -> Self {
        match e {
            qst_core::Error::Parameter(_) | qst_core::Error::Dimension(_) => {
                CliError::User(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::User(format!("io: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
