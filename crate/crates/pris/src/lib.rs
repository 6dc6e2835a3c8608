//! Files, configuration and commands around `pris-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod imageio;
pub mod report;
pub mod synth;
pub mod widefile;
