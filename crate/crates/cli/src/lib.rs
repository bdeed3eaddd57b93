//! Library side of the `matnet` command-line tool: dataset ingestion,
//! the end-to-end analysis pipeline, and edge-list export formats.

pub mod analyze;
pub mod error;
pub mod export;
pub mod ingest;

pub use error::{CliError, CliResult};
