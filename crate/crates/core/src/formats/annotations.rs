use std::path::Path;

use super::{read_file, FormatError};
use crate::binio::write_atomic;
use crate::geometry::BBox;

/// One labeled box: the track id is the instance label.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub frame: u32,
    pub track: String,
    pub object_type: String,
    pub bbox: BBox,
}

const KITTI: &str = "kitti tracking labels";
const CSV: &str = "annotation csv";

pub const CSV_HEADER: [&str; 7] = ["frame", "track", "type", "x1", "y1", "x2", "y2"];

fn row_err(format: &'static str, line: usize, reason: impl Into<String>) -> FormatError {
    FormatError::Row {
        format,
        line,
        reason: reason.into(),
    }
}

fn parse_box(format: &'static str, line: usize, fields: [&str; 4]) -> Result<BBox, FormatError> {
    let mut v = [0.0f64; 4];
    for (slot, (name, raw)) in v.iter_mut().zip(["x1", "y1", "x2", "y2"].iter().zip(fields)) {
        *slot = raw
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| row_err(format, line, format!("{name} is not a finite number: {raw:?}")))?;
    }
    BBox::new(v[0], v[1], v[2], v[3]).ok_or_else(|| {
        row_err(
            format,
            line,
            format!("box ({}, {}, {}, {}) has no positive area", v[0], v[1], v[2], v[3]),
        )
    })
}

fn parse_frame(format: &'static str, line: usize, raw: &str) -> Result<u32, FormatError> {
    raw.trim()
        .parse::<u32>()
        .map_err(|_| row_err(format, line, format!("frame is not a non-negative integer: {raw:?}")))
}

/// KITTI tracking label rows: `frame track type truncated occluded alpha
/// left top right bottom [3D fields...]`, whitespace separated. `DontCare`
/// rows are skipped. The 3D fields must be numeric but are not kept.
pub fn parse_kitti_tracking(bytes: &[u8]) -> Result<Vec<AnnotationRecord>, FormatError> {
    let text = std::str::from_utf8(bytes).map_err(|_| FormatError::Encoding { format: KITTI })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 10 {
            return Err(row_err(KITTI, n, format!("expected at least 10 fields, found {}", fields.len())));
        }
        let frame = parse_frame(KITTI, n, fields[0])?;
        if fields[2] == "DontCare" {
            continue;
        }
        for (name, raw) in ["truncated", "occluded", "alpha"].iter().zip(&fields[3..6]) {
            if raw.parse::<f64>().is_err() {
                return Err(row_err(KITTI, n, format!("{name} is not numeric: {raw:?}")));
            }
        }
        let bbox = parse_box(KITTI, n, [fields[6], fields[7], fields[8], fields[9]])?;
        if let Some(bad) = fields[10..].iter().find(|f| f.parse::<f64>().is_err()) {
            return Err(row_err(KITTI, n, format!("3D field is not numeric: {bad:?}")));
        }
        out.push(AnnotationRecord {
            frame,
            track: fields[1].to_string(),
            object_type: fields[2].to_string(),
            bbox,
        });
    }
    Ok(out)
}

/// CSV with the exact header `frame,track,type,x1,y1,x2,y2`.
pub fn parse_simple_csv(bytes: &[u8]) -> Result<Vec<AnnotationRecord>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = rdr.headers().map_err(|e| csv_err(&e, 1))?.clone();
    if header.iter().map(str::trim).ne(CSV_HEADER.iter().copied()) {
        return Err(row_err(
            CSV,
            1,
            format!("header must be {:?}, found {:?}", CSV_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(&e, 0))?;
        let n = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let frame = parse_frame(CSV, n, &rec[0])?;
        let track = rec[1].trim();
        if track.is_empty() {
            return Err(row_err(CSV, n, "empty track label"));
        }
        let bbox = parse_box(CSV, n, [&rec[3], &rec[4], &rec[5], &rec[6]])?;
        out.push(AnnotationRecord {
            frame,
            track: track.to_string(),
            object_type: rec[2].trim().to_string(),
            bbox,
        });
    }
    Ok(out)
}

fn csv_err(e: &csv::Error, fallback_line: usize) -> FormatError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(fallback_line);
    match e.kind() {
        csv::ErrorKind::Utf8 { .. } => FormatError::Encoding { format: CSV },
        csv::ErrorKind::UnequalLengths { len, expected_len, .. } => {
            row_err(CSV, line, format!("expected {expected_len} fields, found {len}"))
        }
        _ => row_err(CSV, line, e.to_string()),
    }
}

/// Writes records in the simple CSV layout. Numbers use the shortest form
/// that parses back exactly.
pub fn serialize_simple_csv(records: &[AnnotationRecord]) -> Result<String, FormatError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| FormatError::Invalid {
        format: CSV,
        reason: e.to_string(),
    };
    w.write_record(CSV_HEADER).map_err(fail)?;
    for r in records {
        let b = &r.bbox;
        w.write_record([
            r.frame.to_string(),
            r.track.clone(),
            r.object_type.clone(),
            b.x1.to_string(),
            b.y1.to_string(),
            b.x2.to_string(),
            b.y2.to_string(),
        ])
        .map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| FormatError::Invalid {
        format: CSV,
        reason: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv of strings is utf-8"))
}

pub fn save_simple_csv(path: impl AsRef<Path>, records: &[AnnotationRecord]) -> Result<(), FormatError> {
    let text = serialize_simple_csv(records)?;
    write_atomic(path.as_ref(), text.as_bytes()).map_err(|e| FormatError::io(path.as_ref(), e))
}

pub fn read_kitti_tracking(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>, FormatError> {
    parse_kitti_tracking(&read_file(path.as_ref())?)
}

pub fn read_simple_csv(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>, FormatError> {
    parse_simple_csv(&read_file(path.as_ref())?)
}

/// Picks the CSV parser when the first line is the CSV header, KITTI
/// otherwise.
pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>, FormatError> {
    let bytes = read_file(path.as_ref())?;
    let first = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
    if first.starts_with(b"frame,") {
        parse_simple_csv(&bytes)
    } else {
        parse_kitti_tracking(&bytes)
    }
}
