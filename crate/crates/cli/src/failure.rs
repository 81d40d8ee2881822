use std::fmt;
use std::process::ExitCode;

/// Why a command stopped; each kind has its own exit status.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Solver(String),
    Checks(usize),
    Io(String),
}

impl Failure {
    /// A construction error attributed to a config key.
    pub fn config(key: &str, e: impl fmt::Display) -> Self {
        Failure::Config(format!("{key}: {e}"))
    }

    pub fn solver(context: &str, e: impl fmt::Display) -> Self {
        Failure::Solver(format!("{context}: {e}"))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Checks(_) => 4,
            Failure::Io(_) => 1,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Solver(m) => write!(f, "solver failure: {m}"),
            Failure::Checks(n) => write!(f, "{n} check(s) failed"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Io(e.to_string())
    }
}
