//! Config-driven commands behind the `pulsedet` binary.
//!
//! Every command works inside one output directory. `manifest.toml` there
//! records the config hash, the completed stages and a SHA-256 digest of
//! every file written; downstream commands refuse to run on a directory
//! produced from a different config.

pub mod commands;
pub mod config;
pub mod io;
pub mod manifest;

pub use commands::Context;
pub use config::ExperimentConfig;
pub use manifest::RunManifest;
