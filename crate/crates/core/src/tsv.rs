//! Tab-separated file reading shared by every on-disk format.
//!
//! All data files are UTF-8, tab-delimited, with a header row naming the
//! fields. Lines starting with `#` are comments. Fields are taken verbatim
//! (no quoting), so text fields may contain commas and quotes but not tabs.

use serde::de::DeserializeOwned;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("{file}:{line}: field `{field}`: {message}")]
    Field {
        file: String,
        line: u64,
        field: String,
        message: String,
    },
    #[error("{file}:{line}: {message}")]
    Record {
        file: String,
        line: u64,
        message: String,
    },
}

impl ParseError {
    pub fn record(file: &str, line: u64, message: impl Into<String>) -> Self {
        Self::Record {
            file: file.to_owned(),
            line,
            message: message.into(),
        }
    }

    pub fn field(file: &str, line: u64, field: &str, message: impl Into<String>) -> Self {
        Self::Field {
            file: file.to_owned(),
            line,
            field: field.to_owned(),
            message: message.into(),
        }
    }
}

/// A parsed record together with the 1-based line it came from.
#[derive(Debug, Clone)]
pub struct Line<T> {
    pub line: u64,
    pub record: T,
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .quoting(false)
        .trim(csv::Trim::None)
        .from_reader(text.as_bytes())
}

/// Deserializes every row of `text` into `T`, reporting the file, line and
/// offending field on failure.
pub fn read_records<T: DeserializeOwned>(file: &str, text: &str) -> Result<Vec<Line<T>>, ParseError> {
    let mut rdr = reader(text);
    let headers = rdr
        .headers()
        .map_err(|e| ParseError::record(file, 1, e.to_string()))?
        .clone();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            ParseError::record(file, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let record = row.deserialize(Some(&headers)).map_err(|e| {
            let message = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                other => format!("{other:?}"),
            };
            match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => match err.field() {
                    Some(idx) => ParseError::field(
                        file,
                        line,
                        headers.get(idx as usize).unwrap_or("?"),
                        message,
                    ),
                    // enum errors carry no column index; find the offending cell
                    None => match offending_column(&row, &message) {
                        Some(idx) => ParseError::field(file, line, headers.get(idx).unwrap_or("?"), message),
                        None => ParseError::record(file, line, message),
                    },
                },
                _ => ParseError::record(file, line, message),
            }
        })?;
        out.push(Line { line, record });
    }
    Ok(out)
}

fn offending_column(row: &csv::StringRecord, message: &str) -> Option<usize> {
    let rest = message.strip_prefix("unknown variant `")?;
    let value = &rest[..rest.find('`')?];
    row.iter().position(|cell| cell == value)
}

/// Raw access for files whose columns are not known statically (score matrices).
pub fn read_rows(file: &str, text: &str) -> Result<(Vec<String>, Vec<Line<Vec<String>>>), ParseError> {
    let mut rdr = reader(text);
    let headers = rdr
        .headers()
        .map_err(|e| ParseError::record(file, 1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            ParseError::record(file, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        rows.push(Line {
            line,
            record: row.iter().map(str::to_owned).collect(),
        });
    }
    Ok((headers, rows))
}

/// Splits a `;`-separated list field, dropping empty items.
pub fn split_list(field: &str) -> Vec<String> {
    field
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}
