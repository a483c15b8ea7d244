//! Library side of the `ivkp` command: configuration, CSV ingestion,
//! commands and report types.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod report;

pub use commands::{cmd_invert, cmd_kpcheck, cmd_simulate, cmd_test, summary, Overrides};
pub use config::{RunConfig, SimulateConfig};
pub use error::{CliError, CliResult};
pub use report::Report;
