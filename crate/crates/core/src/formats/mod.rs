//! On-disk formats: annotation files, activation dumps and signature sets.
//!
//! Parsers reject malformed input with a typed error and never repair it.
//! Writers go through a temporary file and a rename.

mod annotations;
mod dump;
mod sigfile;

use thiserror::Error;

pub use annotations::{
    parse_kitti_tracking, parse_simple_csv, read_annotations, read_kitti_tracking, read_simple_csv, save_simple_csv,
    serialize_simple_csv, AnnotationRecord, CSV_HEADER,
};
pub use dump::{load_dump, parse_dump, save_dump, serialize_dump, ActivationDump, DumpFrame, DUMP_MAGIC};
pub use sigfile::{load_signatures, parse_signatures, save_signatures, serialize_signatures, SIGNATURE_HEADER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{format}: not valid UTF-8")]
    Encoding { format: &'static str },
    #[error("{format}: bad magic")]
    BadMagic { format: &'static str },
    #[error("{format}: unsupported version {version}")]
    UnsupportedVersion { format: &'static str, version: u32 },
    #[error("{format}: truncated while reading {context}")]
    Truncated { format: &'static str, context: String },
    #[error("{format}: {reason}")]
    Invalid { format: &'static str, reason: String },
    #[error("{format} line {line}: {reason}")]
    Row {
        format: &'static str,
        line: usize,
        reason: String,
    },
}

impl FormatError {
    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        FormatError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

/// Writes an evaluation report's text form atomically.
pub fn save_report(path: impl AsRef<std::path::Path>, report: &crate::eval::EvalReport) -> Result<(), FormatError> {
    crate::binio::write_atomic(path.as_ref(), report.to_text().as_bytes()).map_err(|e| FormatError::io(path.as_ref(), e))
}

/// Reads a report written by [`save_report`].
pub fn load_report(path: impl AsRef<std::path::Path>) -> Result<crate::eval::EvalReport, FormatError> {
    let bytes = read_file(path.as_ref())?;
    let text = std::str::from_utf8(&bytes).map_err(|_| FormatError::Encoding { format: "evaluation report" })?;
    crate::eval::EvalReport::parse(text).map_err(|e| FormatError::Invalid {
        format: "evaluation report",
        reason: e.to_string(),
    })
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>, FormatError> {
    std::fs::read(path).map_err(|e| FormatError::io(path, e))
}
