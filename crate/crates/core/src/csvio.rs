//! Shared CSV reading helpers. Writers format their rows directly.

use csv::{ReaderBuilder, StringRecord};

use crate::error::{Error, Result};

/// Header and data records, each record tagged with its 1-based line number.
pub(crate) struct Table {
    pub header: Vec<String>,
    pub rows: Vec<(u64, StringRecord)>,
}

pub(crate) fn read_table(bytes: &[u8]) -> Result<Table> {
    let mut reader = ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::parse(1, "missing header"));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map_or(0, |p| p.line());
        rows.push((line, record));
    }
    Ok(Table { header, rows })
}

pub(crate) fn parse_f64(cell: &str, line: u64, what: &str) -> Result<f64> {
    let v: f64 = cell
        .parse()
        .map_err(|_| Error::parse(line, format!("{what}: {cell:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(
            line,
            format!("{what}: {cell:?} is not finite"),
        ));
    }
    Ok(v)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => format!("expected {expected_len} cells, found {len}"),
        _ => e.to_string(),
    };
    Error::parse(line, message)
}
