use std::fmt;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const PARTIAL: i32 = 2;
    pub const BACKEND: i32 = 3;
}

/// Command failure carrying the exit code it maps to.
#[derive(Debug)]
pub struct AppError {
    pub code: i32,
    pub message: String,
}

impl AppError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: exit::USAGE, message: message.into() }
    }

    pub fn partial(message: impl Into<String>) -> Self {
        Self { code: exit::PARTIAL, message: message.into() }
    }

    pub fn backend(message: impl Into<String>) -> Self {
        Self { code: exit::BACKEND, message: message.into() }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for AppError {}

pub type AppResult<T> = Result<T, AppError>;

/// Tags foreign errors as input/usage failures with a context prefix.
pub trait Context<T> {
    fn context(self, what: impl fmt::Display) -> AppResult<T>;
}

impl<T, E: fmt::Display> Context<T> for Result<T, E> {
    fn context(self, what: impl fmt::Display) -> AppResult<T> {
        self.map_err(|e| AppError::usage(format!("{what}: {e}")))
    }
}
