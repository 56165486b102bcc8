//! Command-line driver and curation service for texture-guided anomaly
//! synthesis.

pub mod config;
pub mod error;
pub mod fixture;
pub mod pipeline;
pub mod server;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
