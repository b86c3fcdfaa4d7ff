use std::fmt;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_OOM: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    /// The run was refused by the memory model; the OOM report was still written.
    Oom(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Config(_) => EXIT_CONFIG,
            Self::Oom(_) => EXIT_OOM,
            Self::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Oom(m) => write!(f, "out of memory (simulated): {m}"),
            Self::Internal(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<pdcache::Error> for CliError {
    fn from(e: pdcache::Error) -> Self {
        match e {
            pdcache::Error::Config(_) => Self::Config(e.to_string()),
            pdcache::Error::Input(_) => Self::Usage(e.to_string()),
            other => Self::Internal(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Internal(e.to_string())
    }
}
