//! Configuration, sweep runner and command implementations for the `qnn` CLI.

pub mod config;
pub mod expr;
pub mod runner;

pub use config::RunConfig;
