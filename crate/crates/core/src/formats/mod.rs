//! File formats: the binary recording container, comma-separated tables and the
//! JSON documents (nerve models, histology sections, cuff layouts, session logs).
//!
//! Byte layouts are described in `docs/formats.md` at the repository root.

mod container;
mod table;
pub mod tables;

pub use container::{
    read_recording, read_recording_file, write_recording, write_recording_file, ContainerHeader, CONTAINER_MAGIC,
    CONTAINER_VERSION,
};
pub use table::{export_table, read_table, Column, ColumnType, Schema, Value};

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("not a recording container (bad magic at byte {offset})")]
    BadMagic { offset: usize },

    #[error("unsupported container version {found} at byte {offset} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32, offset: usize },

    #[error("truncated input at byte {offset}: need {needed} bytes, {available} available")]
    Truncated { offset: usize, needed: usize, available: usize },

    #[error("sample count mismatch at byte {offset}: header declares {expected} values, payload holds {found}")]
    CountMismatch { offset: usize, expected: usize, found: usize },

    #[error("invalid header at byte {offset}: {message}")]
    Header { offset: usize, message: String },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("column `{column}`: {message}")]
    Schema { column: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Read a JSON document, reporting parse failures as `file:line:column`.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let text = std::fs::read_to_string(path)?;
    parse_json(&text, &path.display().to_string())
}

pub fn parse_json<T: DeserializeOwned>(text: &str, source: &str) -> Result<T, FormatError> {
    serde_json::from_str(text).map_err(|e| FormatError::Parse {
        location: format!("{source}:{}:{}", e.line(), e.column()),
        message: e.to_string(),
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    std::fs::write(path, to_json(value))?;
    Ok(())
}
