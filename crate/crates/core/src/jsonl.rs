//! Line-delimited JSON encoding for [`Record`] types.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::domain::{Record, ValidationError};

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("validation error: {0}")]
    Invalid(#[from] ValidationError),
}

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Line {
        path: PathBuf,
        line: usize,
        #[source]
        source: DecodeError,
    },
}

impl JsonlError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        JsonlError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn is_validation(&self) -> bool {
        matches!(self, JsonlError::Line { .. })
    }
}

/// Encode one record as a single JSON line (no trailing newline).
pub fn encode_record<R: Record>(record: &R) -> String {
    serde_json::to_string(record).expect("domain records always serialize")
}

/// Decode one JSON line and check the record's invariants.
pub fn decode_record<R: Record>(line: &str) -> Result<R, DecodeError> {
    let record: R = serde_json::from_str(line)?;
    record.validate()?;
    Ok(record)
}

/// Read every nonblank line of a JSONL file, failing on the first bad line.
pub fn read_jsonl<R: Record>(path: &Path) -> Result<Vec<R>, JsonlError> {
    let mut out = Vec::new();
    for item in JsonlLines::open(path)? {
        let (line_no, line) = item?;
        let record = decode_record(&line).map_err(|source| JsonlError::Line {
            path: path.to_path_buf(),
            line: line_no,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Iterator over `(line_number, text)` for the nonblank lines of a file.
pub struct JsonlLines {
    path: PathBuf,
    reader: BufReader<File>,
    line_no: usize,
}

impl JsonlLines {
    pub fn open(path: &Path) -> Result<Self, JsonlError> {
        let file = File::open(path).map_err(|e| JsonlError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            reader: BufReader::new(file),
            line_no: 0,
        })
    }
}

impl Iterator for JsonlLines {
    type Item = Result<(usize, String), JsonlError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut buf = String::new();
        loop {
            buf.clear();
            match self.reader.read_line(&mut buf) {
                Ok(0) => return None,
                Ok(_) => {
                    self.line_no += 1;
                    let trimmed = buf.trim_end_matches(['\n', '\r']);
                    if trimmed.trim().is_empty() {
                        continue;
                    }
                    return Some(Ok((self.line_no, trimmed.to_string())));
                }
                Err(e) => return Some(Err(JsonlError::io(&self.path, e))),
            }
        }
    }
}

/// Write records to `path`, one per line, replacing any existing file.
pub fn write_jsonl<'a, R, I>(path: &Path, records: I) -> Result<usize, JsonlError>
where
    R: Record + 'a,
    I: IntoIterator<Item = &'a R>,
{
    let file = File::create(path).map_err(|e| JsonlError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut n = 0;
    for r in records {
        writeln!(w, "{}", encode_record(r)).map_err(|e| JsonlError::io(path, e))?;
        n += 1;
    }
    w.flush().map_err(|e| JsonlError::io(path, e))?;
    Ok(n)
}

/// Write a single record as a pretty JSON document (used for distribution.json).
pub fn write_json<R: Record>(path: &Path, record: &R) -> Result<(), JsonlError> {
    let mut text = serde_json::to_string_pretty(record).expect("domain records always serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| JsonlError::io(path, e))
}

pub fn read_json<R: Record>(path: &Path) -> Result<R, JsonlError> {
    let text = std::fs::read_to_string(path).map_err(|e| JsonlError::io(path, e))?;
    let record: R = serde_json::from_str(&text).map_err(|e| JsonlError::Line {
        path: path.to_path_buf(),
        line: e.line(),
        source: DecodeError::Parse(e),
    })?;
    record.validate().map_err(|e| JsonlError::Line {
        path: path.to_path_buf(),
        line: 1,
        source: DecodeError::Invalid(e),
    })?;
    Ok(record)
}
