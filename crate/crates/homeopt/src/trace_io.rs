//! CSV trace files: `timestamp,device_id,power`, one reading per row.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use homeopt_core::trace::Reading;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CANONICAL: [&str; 3] = ["timestamp", "device_id", "power"];
const MAX_LISTED_ROWS: usize = 32;

/// A column picked by header name or by zero-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Column {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub timestamp_col: Column,
    pub device_col: Column,
    pub power_col: Column,
    /// `None` detects a header from the first row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub header: Option<bool>,
    /// Abort on the first malformed row instead of skipping it.
    pub strict: bool,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            timestamp_col: Column::Name(CANONICAL[0].into()),
            device_col: Column::Name(CANONICAL[1].into()),
            power_col: Column::Name(CANONICAL[2].into()),
            header: None,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    /// Data rows seen, header excluded.
    pub rows: u64,
    pub parsed: u64,
    pub skipped: u64,
    /// Line numbers of the first skipped rows.
    pub skipped_rows: Vec<u64>,
}

impl Schema {
    fn columns(&self) -> [&Column; 3] {
        [&self.timestamp_col, &self.device_col, &self.power_col]
    }

    fn looks_like_header(&self, first: &csv::StringRecord) -> bool {
        let names: Vec<&str> = self
            .columns()
            .into_iter()
            .filter_map(|c| match c {
                Column::Name(n) => Some(n.as_str()),
                Column::Index(_) => None,
            })
            .collect();
        if !names.is_empty() {
            return names.iter().all(|n| first.iter().any(|f| f.trim() == *n));
        }
        let ts = match self.timestamp_col {
            Column::Index(i) => first.get(i),
            Column::Name(_) => None,
        };
        ts.is_some_and(|f| parse_timestamp(f).is_none())
    }

    fn resolve(&self, header: Option<&csv::StringRecord>) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for (slot, col) in out.iter_mut().zip(self.columns()) {
            *slot = match (col, header) {
                (Column::Index(i), _) => *i,
                (Column::Name(n), Some(h)) => h
                    .iter()
                    .position(|f| f.trim() == n)
                    .ok_or_else(|| Error::Config(format!("column {n:?} not in header")))?,
                (Column::Name(n), None) => CANONICAL
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::Config(format!("column {n:?} needs a header row or an index")))?,
            };
        }
        Ok(out)
    }
}

fn parse_timestamp(field: &str) -> Option<i64> {
    let f = field.trim();
    if let Ok(v) = f.parse::<i64>() {
        return Some(v);
    }
    // whole seconds written as floats, e.g. "1451606400.0"
    let v: f64 = f.parse().ok()?;
    (v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15).then_some(v as i64)
}

/// Parses a trace from `input`. `source` names the input in error messages.
pub fn parse_trace<R: Read>(input: R, schema: &Schema, source: &Path) -> Result<(Vec<Reading>, ParseReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();
    let mut report = ParseReport::default();
    let mut readings = Vec::new();

    let first = match records.next() {
        None => return Ok((readings, report)),
        Some(r) => r.map_err(|e| csv_error(source, e))?,
    };
    let has_header = schema.header.unwrap_or_else(|| schema.looks_like_header(&first));
    let cols = schema.resolve(has_header.then_some(&first))?;
    let pending = if has_header { None } else { Some(Ok(first)) };

    for record in pending.into_iter().chain(records) {
        let record = record.map_err(|e| csv_error(source, e))?;
        let row = record.position().map_or(report.rows + 1, |p| p.line());
        report.rows += 1;
        match parse_row(&record, cols) {
            Ok((ts, device, power)) => {
                let ts = ts.ok_or_else(|| Error::Row {
                    path: source.to_path_buf(),
                    row,
                    message: format!("unparseable timestamp {:?}", record.get(cols[0]).unwrap_or("")),
                })?;
                let reading = Reading::new(ts, device, power).map_err(|e| Error::Row {
                    path: source.to_path_buf(),
                    row,
                    message: e.to_string(),
                })?;
                readings.push(reading);
                report.parsed += 1;
            }
            Err(message) => {
                if schema.strict {
                    return Err(Error::Row {
                        path: source.to_path_buf(),
                        row,
                        message,
                    });
                }
                log::debug!("{}: skipping row {row}: {message}", source.display());
                report.skipped += 1;
                if report.skipped_rows.len() < MAX_LISTED_ROWS {
                    report.skipped_rows.push(row);
                }
            }
        }
    }
    Ok((readings, report))
}

type Row = (Option<i64>, String, f64);

fn parse_row(record: &csv::StringRecord, cols: [usize; 3]) -> std::result::Result<Row, String> {
    let field = |i: usize| record.get(i).ok_or_else(|| format!("expected at least {} fields, found {}", i + 1, record.len()));
    let ts = field(cols[0])?;
    let device = field(cols[1])?.trim();
    let power = field(cols[2])?.trim();
    if device.is_empty() {
        return Err("empty device id".into());
    }
    let power: f64 = power.parse().map_err(|_| format!("unparseable power {power:?}"))?;
    if !power.is_finite() {
        return Err(format!("non-finite power {power}"));
    }
    Ok((parse_timestamp(ts), device.to_string(), power))
}

fn csv_error(source: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(source, io),
        other => Error::Row {
            path: source.to_path_buf(),
            row: 0,
            message: format!("{other:?}"),
        },
    }
}

pub fn read_trace(path: &Path, schema: &Schema) -> Result<(Vec<Reading>, ParseReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trace(BufReader::new(file), schema, path)
}

/// Writes readings in the canonical schema, header included.
pub fn write_trace<W: Write>(output: W, readings: &[Reading]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(CANONICAL)?;
    for r in readings {
        w.write_record([r.timestamp.to_string(), r.device_id.clone(), r.power.to_string()])?;
    }
    w.flush()
}

pub fn save_trace(path: &Path, readings: &[Reading]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace(BufWriter::new(file), readings).map_err(|e| Error::io(path, e))
}
