//! Per-slot replay report: a CSV of the clash and power series plus a JSON
//! mirror that also records the run configuration and seeds.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use homeopt_core::sim::{RunSummary, SlotMetrics};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Seeds};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = [
    "slot",
    "strict_clashes",
    "ld_clashes",
    "total_clashes",
    "actual_power",
    "planned_power",
    "updates",
];

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub config: RunConfig,
    pub seeds: Seeds,
    pub summary: RunSummary,
    pub slots: Vec<SlotMetrics>,
}

impl Report {
    pub fn new(config: &RunConfig, slots: Vec<SlotMetrics>) -> Result<Self> {
        validate(&slots).map_err(|m| Error::Internal(format!("simulation produced a bad report: {m}")))?;
        Ok(Report {
            format_version: FORMAT_VERSION,
            config: config.clone(),
            seeds: config.seeds(),
            summary: RunSummary::from_metrics(&slots),
            slots,
        })
    }
}

/// Rejects empty reports and rows whose clash columns do not add up.
pub fn validate(slots: &[SlotMetrics]) -> std::result::Result<(), String> {
    if slots.is_empty() {
        return Err("no slots".into());
    }
    for m in slots {
        m.validate().map_err(|e| e.to_string())?;
        if !(m.actual_power >= 0.0 && m.planned_power >= 0.0) {
            return Err(format!("slot {}: negative or missing power", m.slot));
        }
    }
    Ok(())
}

pub fn write_csv<W: Write>(output: W, slots: &[SlotMetrics]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(CSV_HEADER)?;
    for m in slots {
        w.write_record([
            m.slot.to_string(),
            m.strict_clashes.to_string(),
            m.ld_clashes.to_string(),
            m.total_clashes.to_string(),
            m.actual_power.to_string(),
            m.planned_power.to_string(),
            m.updates.to_string(),
        ])?;
    }
    w.flush()
}

/// Reads the CSV series back. Columns absent from the CSV (readings,
/// substitutions) come back as zero.
pub fn read_csv(path: &Path) -> Result<Vec<SlotMetrics>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::report(path, e))?;
    let header = r.headers().map_err(|e| Error::report(path, e))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::report(path, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut slots = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::report(path, e))?;
        let bad = |col: usize| Error::report(path, format!("row {}: bad {}", i + 2, CSV_HEADER[col]));
        let int = |col: usize| rec.get(col).and_then(|f| f.parse::<u64>().ok()).ok_or_else(|| bad(col));
        let float = |col: usize| rec.get(col).and_then(|f| f.parse::<f64>().ok()).ok_or_else(|| bad(col));
        slots.push(SlotMetrics {
            slot: int(0)? as usize,
            strict_clashes: int(1)?,
            ld_clashes: int(2)?,
            total_clashes: int(3)?,
            actual_power: float(4)?,
            planned_power: float(5)?,
            updates: int(6)?,
            ..SlotMetrics::default()
        });
    }
    for m in &slots {
        if m.total_clashes < m.strict_clashes + m.ld_clashes {
            return Err(Error::report(
                path,
                format!("slot {}: total_clashes below strict_clashes + ld_clashes", m.slot),
            ));
        }
    }
    Ok(slots)
}

pub fn save_csv(path: &Path, slots: &[SlotMetrics]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(BufWriter::new(file), slots).map_err(|e| Error::io(path, e))
}

pub fn save_json(path: &Path, report: &Report) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_json(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::report(path, e))?;
    match header.get("format_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v <= u64::from(FORMAT_VERSION) => {}
        Some(v) => return Err(Error::report(path, format!("format version {v} is newer than supported {FORMAT_VERSION}"))),
        None => return Err(Error::report(path, "missing format_version")),
    }
    let report: Report = serde_json::from_value(header).map_err(|e| Error::report(path, e))?;
    validate(&report.slots).map_err(|m| Error::report(path, m))?;
    Ok(report)
}
