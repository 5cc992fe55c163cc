//! Experiment runner behind the `dmsb` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod config;
pub mod plot;

use std::io;

pub use args::{main_with, Args};
pub use commands::{run, RunReport};
pub use config::{Experiment, ExperimentConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INSTABILITY: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(dms_battery::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl From<dms_battery::Error> for CliError {
    fn from(e: dms_battery::Error) -> Self {
        use dms_battery::Error as E;
        match e {
            E::InvalidSpec(m) | E::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(dms_battery::Error::Instability { .. }) => EXIT_INSTABILITY,
            _ => EXIT_FAILURE,
        }
    }
}
