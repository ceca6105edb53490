//! Configuration and orchestration behind the `hlevent` binary.

pub mod config;
pub mod pipeline;

pub use config::Config;
pub use pipeline::{run, Command, RunReport};
