//! Command-line harness: configuration, data ingestion, result persistence and the
//! experiment drivers behind the `gradbound` binary.

pub mod cli;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod figures;
pub mod persist;
pub mod verify;

pub use config::{RawConfig, RunConfig};
pub use error::{HarnessError, Result};
pub use persist::{persist, RecordKind, ResultRecord};
