use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

/// Failures that map onto the CLI exit-code contract. Anything else exits with 1.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("diverged: {0}")]
    Diverged(String),
    #[error("validation failed: {0}")]
    Acceptance(String),
}

impl RunError {
    pub fn config(msg: impl std::fmt::Display) -> Self {
        RunError::Config(msg.to_string())
    }

    pub fn code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Diverged(_) => EXIT_DIVERGED,
            RunError::Acceptance(_) => EXIT_ACCEPTANCE,
        }
    }
}

impl From<plrf_core::Error> for RunError {
    fn from(e: plrf_core::Error) -> Self {
        RunError::Config(e.to_string())
    }
}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    err.chain()
        .find_map(|e| e.downcast_ref::<RunError>())
        .map(RunError::code)
        .unwrap_or(1)
}
