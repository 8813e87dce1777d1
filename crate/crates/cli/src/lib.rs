//! Library side of the `odcsa` binary: configuration, the training loop,
//! evaluation helpers and the subcommand bodies.

pub mod commands;
pub mod config;
pub mod eval;
pub mod train;

pub use config::Config;
