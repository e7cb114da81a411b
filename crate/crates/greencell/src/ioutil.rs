//! Small file helpers shared by the CSV/manifest readers and writers.
//!
//! Output files are written atomically (temp file in the same directory,
//! then rename) so a crashed run never leaves a half-written artifact.
//! Floats are formatted with `Display`, which round-trips exactly through
//! `str::parse::<f64>()`.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes a CSV file from a header line and preformatted rows.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut out = String::with_capacity(header.len() + 1 + rows.iter().map(|r| r.len() + 1).sum::<usize>());
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Opens a CSV file with headers and returns the reader.
pub fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| {
        Error::parse(path, 0, format!("cannot open: {e}"))
    })?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

pub fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Parses one field of a CSV record, naming the file, line, and column on error.
pub fn parse_field<T: FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    path: &Path,
    name: &str,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let line = record_line(record);
    let raw = record
        .get(idx)
        .ok_or_else(|| Error::parse(path, line, format!("missing field `{name}`")))?;
    raw.trim()
        .parse::<T>()
        .map_err(|e| Error::parse(path, line, format!("field `{name}`: {e}")))
}

pub fn csv_records(
    reader: &mut csv::Reader<fs::File>,
    path: &Path,
) -> Result<Vec<csv::StringRecord>> {
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e
                .position()
                .map(|p| p.line())
                .unwrap_or(0);
            Error::parse(path, line, e.to_string())
        })?;
        out.push(rec);
    }
    Ok(out)
}
