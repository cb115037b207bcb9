//! Versioned CSV files: a `# schema=v1` line, then a header row and records.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const SCHEMA_LINE: &str = "# schema=v1";

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(path, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Renders a versioned CSV document with proper quoting.
pub fn render<R, I, S>(header: &[&str], rows: R) -> Vec<u8>
where
    R: IntoIterator<Item = I>,
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut out = Vec::new();
    out.extend_from_slice(SCHEMA_LINE.as_bytes());
    out.push(b'\n');
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Parsed CSV body: header names and raw rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Parses a versioned document; unknown schema versions are rejected.
pub fn parse(text: &str, origin: &str) -> Result<Table> {
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    let first = first.trim_end();
    if first != SCHEMA_LINE {
        let msg = if first.starts_with("# schema=") {
            format!("unsupported schema `{first}`")
        } else {
            "missing `# schema=v1` line".to_string()
        };
        return Err(Error::parse(origin, 1, msg));
    }
    let mut r = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let bad = |line: usize, e: csv::Error| Error::parse(origin, line, e.to_string());
    let header = r.headers().map_err(|e| bad(2, e))?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let line = rows.len() + 3;
        rows.push(rec.map_err(|e| bad(line, e))?.iter().map(str::to_owned).collect());
    }
    Ok(Table { header, rows })
}

pub fn read(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, &path.display().to_string())
}
