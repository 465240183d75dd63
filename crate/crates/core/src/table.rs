//! Shared plumbing for the comma-separated file formats.
//!
//! All formats share the same conventions: a header row is required, `#`
//! starts a comment line, fields are trimmed.

use std::io::{Read, Write};

use crate::error::{Error, Result, RowError};

/// A data row with its 1-based line number in the source file.
#[derive(Debug, Clone)]
pub struct Row {
    pub line: u64,
    pub fields: Vec<String>,
}

impl Row {
    pub fn float(&self, idx: usize, name: &str) -> Result<f64, RowError> {
        let raw = self.fields.get(idx).map(String::as_str).unwrap_or("");
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| RowError {
                line: self.line,
                message: format!("{name}: '{raw}' is not a finite number"),
            })
    }

    pub fn error(&self, message: impl Into<String>) -> RowError {
        RowError {
            line: self.line,
            message: message.into(),
        }
    }
}

/// Read every data row, checking the header against `expected` column names.
pub fn read_rows<R: Read>(reader: R, expected: &[&str], what: &str) -> Result<Vec<Row>> {
    let (header, rows) = read_table(reader, what)?;
    if header.iter().map(String::as_str).ne(expected.iter().copied()) {
        return Err(Error::InvalidRows(vec![RowError {
            line: 1,
            message: format!(
                "expected header '{}', found '{}'",
                expected.join(", "),
                header.join(", ")
            ),
        }]));
    }
    Ok(rows)
}

/// Header and data rows of a file with arbitrary columns. Every row must
/// have as many fields as the header.
pub fn read_table<R: Read>(mut reader: R, what: &str) -> Result<(Vec<String>, Vec<Row>)> {
    let mut text = Vec::new();
    reader.read_to_end(&mut text)?;
    // The csv reader reports where it started scanning a record, which may
    // be a comment or blank line in front of it.
    let skippable: Vec<bool> = text
        .split(|&b| b == b'\n')
        .map(|l| l.starts_with(b"#") || l.iter().all(u8::is_ascii_whitespace))
        .collect();
    let physical = |start: u64| {
        let mut i = start.saturating_sub(1) as usize;
        while skippable.get(i).copied().unwrap_or(false) {
            i += 1;
        }
        i as u64 + 1
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_slice());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Empty(what.to_owned()));
    }
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record
            .position()
            .map(|p| physical(p.line()))
            .unwrap_or(0);
        if record.len() != header.len() {
            bad.push(RowError {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
            continue;
        }
        rows.push(Row {
            line,
            fields: record.iter().map(str::to_owned).collect(),
        });
    }
    if !bad.is_empty() {
        return Err(Error::InvalidRows(bad));
    }
    if rows.is_empty() {
        return Err(Error::Empty(what.to_owned()));
    }
    Ok((header, rows))
}

/// Format a number with at most 15 significant digits, shortest form.
///
/// Values that went through an SI round trip come back out with the same
/// decimal text they were read from.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.14e}").parse().expect("valid float text");
    format!("{rounded}")
}

pub fn write_header<W: Write>(w: &mut W, comments: &[String], columns: &[&str]) -> std::io::Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{}", columns.join(","))
}

pub fn write_row<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    let line: Vec<String> = values.iter().map(|v| fmt_num(*v)).collect();
    writeln!(w, "{}", line.join(","))
}
