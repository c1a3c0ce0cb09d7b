//! Signal cache, batch commands, CLI and HTTP service.

pub mod backend;
pub mod cache;
pub mod cli;
pub mod commands;
pub mod error;
pub mod scoring;
pub mod server;

pub use error::{exit, AppError, AppResult};
pub use scoring::{ModelInfo, ScoreResponse, Scorer, Verdict};
