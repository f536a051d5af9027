//! The `xar` tool: scenario generation, session ingestion into the vector
//! knowledge base, one-shot questions, and the HTTP ask-service.

pub mod cli;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod service;

pub use config::AppConfig;
pub use error::AppError;
