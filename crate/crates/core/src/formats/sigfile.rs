//! Labeled signature sets as text.
//!
//! ```text
//! #difs-signatures,version=1,p=<p>
//! <label>,<frame>,<scale id>,<layer id>,<v0>,...,<v(p-1)>
//! ```
//!
//! Values are written in the shortest form that parses back to the same
//! `f32`, so a save/load cycle is exact.

use std::fmt::Write as _;
use std::path::Path;

use super::{read_file, FormatError};
use crate::binio::write_atomic;
use crate::eval::LabeledSample;
use crate::net::{LayerId, Scale};

pub const SIGNATURE_HEADER: &str = "#difs-signatures";
const VERSION: u32 = 1;
const FORMAT: &str = "signature file";

fn row_err(line: usize, reason: impl Into<String>) -> FormatError {
    FormatError::Row {
        format: FORMAT,
        line,
        reason: reason.into(),
    }
}

fn label_problem(label: &str) -> Option<&'static str> {
    if label.is_empty() {
        Some("empty label")
    } else if label.chars().any(|c| c == ',' || c.is_whitespace() || c.is_control()) {
        Some("label contains a comma, whitespace or control character")
    } else if label.starts_with('#') {
        Some("label starts with '#'")
    } else {
        None
    }
}

/// Fails on mixed dimensions, bad labels or non-finite values.
pub fn serialize_signatures(samples: &[LabeledSample]) -> Result<String, FormatError> {
    let p = samples.first().map_or(0, |s| s.values.len());
    let mut out = format!("{SIGNATURE_HEADER},version={VERSION},p={p}\n");
    for (i, s) in samples.iter().enumerate() {
        let invalid = |reason: String| FormatError::Invalid { format: FORMAT, reason };
        if let Some(problem) = label_problem(&s.label) {
            return Err(invalid(format!("signature {i}: {problem}: {:?}", s.label)));
        }
        if s.values.len() != p {
            return Err(invalid(format!("signature {i} has {} values, expected {p}", s.values.len())));
        }
        if let Some(v) = s.values.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("signature {i} holds non-finite value {v}")));
        }
        write!(out, "{},{},{},{}", s.label, s.frame, s.scale.id(), s.layer).unwrap();
        for v in &s.values {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_signatures(path: impl AsRef<Path>, samples: &[LabeledSample]) -> Result<(), FormatError> {
    let text = serialize_signatures(samples)?;
    write_atomic(path.as_ref(), text.as_bytes()).map_err(|e| FormatError::io(path.as_ref(), e))
}

pub fn load_signatures(path: impl AsRef<Path>) -> Result<Vec<LabeledSample>, FormatError> {
    parse_signatures(&read_file(path.as_ref())?)
}

fn parse_header(line: &str) -> Result<usize, FormatError> {
    let mut parts = line.trim_end_matches('\r').split(',');
    if parts.next() != Some(SIGNATURE_HEADER) {
        return Err(FormatError::BadMagic { format: FORMAT });
    }
    let mut version = None;
    let mut p = None;
    for part in parts {
        let (key, value) = part.split_once('=').ok_or_else(|| row_err(1, format!("header field {part:?} is not key=value")))?;
        let number = || value.parse::<usize>().map_err(|_| row_err(1, format!("header {key} is not an integer: {value:?}")));
        match key {
            "version" => version = Some(number()?),
            "p" => p = Some(number()?),
            _ => return Err(row_err(1, format!("unknown header field {key:?}"))),
        }
    }
    match version {
        Some(v) if v == VERSION as usize => {}
        Some(v) => {
            return Err(FormatError::UnsupportedVersion {
                format: FORMAT,
                version: u32::try_from(v).unwrap_or(u32::MAX),
            })
        }
        None => return Err(row_err(1, "header lacks version")),
    }
    p.ok_or_else(|| row_err(1, "header lacks p"))
}

pub fn parse_signatures(bytes: &[u8]) -> Result<Vec<LabeledSample>, FormatError> {
    let text = std::str::from_utf8(bytes).map_err(|_| FormatError::Encoding { format: FORMAT })?;
    let mut lines = text.lines();
    let p = parse_header(lines.next().ok_or(FormatError::BadMagic { format: FORMAT })?)?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != p + 4 {
            return Err(row_err(
                n,
                format!("expected {p} values, found {}", fields.len().saturating_sub(4)),
            ));
        }
        let label = fields[0];
        if let Some(problem) = label_problem(label) {
            return Err(row_err(n, format!("{problem}: {label:?}")));
        }
        let frame = fields[1]
            .parse::<u32>()
            .map_err(|_| row_err(n, format!("frame is not a non-negative integer: {:?}", fields[1])))?;
        let scale = fields[2]
            .parse::<u32>()
            .ok()
            .and_then(Scale::from_id)
            .ok_or_else(|| row_err(n, format!("scale id must be 0, 1 or 2: {:?}", fields[2])))?;
        let layer = fields[3]
            .parse::<LayerId>()
            .map_err(|_| row_err(n, format!("layer id is not an integer: {:?}", fields[3])))?;
        let values = fields[4..]
            .iter()
            .enumerate()
            .map(|(j, raw)| {
                raw.parse::<f32>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| row_err(n, format!("value {j} is not a finite number: {raw:?}")))
            })
            .collect::<Result<Vec<f32>, _>>()?;
        out.push(LabeledSample {
            label: label.to_string(),
            frame,
            scale,
            layer,
            values,
        });
    }
    Ok(out)
}
