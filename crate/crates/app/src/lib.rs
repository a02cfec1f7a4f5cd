//! Application layer for the bubble knowledge-graph engine: configuration,
//! the two-pass chat turn, evaluation, the HTTP service and the CLI.

pub mod cli;
pub mod config;
pub mod engine;
pub mod eval;
pub mod generator;
pub mod service;

pub use config::EngineConfig;
pub use engine::{Engine, EngineError, TurnTrace};
