//! Quarterly report ingestion: JSON parsing, bulk-load export and
//! descriptor lookup.

use std::path::PathBuf;

pub mod bulk;
pub mod descriptors;
mod parse;
mod types;

pub use bulk::{export_bulk, export_bulk_to_dir, export_bulk_to_memory, parse_bulk, write_csv, BulkCounts, BulkTexts};
pub use descriptors::{fetch_descriptors, DescriptorProvider, HttpProvider, ProviderError, TableProvider};
pub use parse::{
    list_input_files, parse_files, parse_quarter, parse_quarter_file, read_json_file, ParsedQuarter,
    RecordDiagnostic,
};
pub use types::*;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("{path}: malformed JSON at byte {offset}: {message}")]
    JsonFile {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    #[error("document has no `results` array")]
    MissingResults,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("writing table {table} failed after {bytes_written} bytes: {source}")]
    Sink {
        table: Table,
        bytes_written: u64,
        source: std::io::Error,
    },
    #[error("bulk text for table {table}, line {line}: {message}")]
    Bulk {
        table: Table,
        line: usize,
        message: String,
    },
}
