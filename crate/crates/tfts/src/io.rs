//! JSONL readers and writers for records, traces and scores.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use tfts_core::metric::TagVocabulary;
use tfts_core::model::UserNightRecord;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    ParseFailure { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: {field}: {reason}")]
    InvariantViolation { path: PathBuf, line: usize, field: String, reason: String },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
}

impl IoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            IoError::Io { .. } => "IoFailure",
            IoError::ParseFailure { .. } => "ParseFailure",
            IoError::InvariantViolation { .. } => "InvariantViolation",
            IoError::Csv { .. } => "ParseFailure",
        }
    }
}

/// One value per non-blank line. Line numbers in errors are 1-based.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IoError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| IoError::ParseFailure {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| IoError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| IoError::io(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Reads and validates a record file against `vocabulary`.
pub fn load_records(path: &Path, vocabulary: &TagVocabulary) -> Result<Vec<UserNightRecord>, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IoError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: UserNightRecord = serde_json::from_str(&line).map_err(|e| IoError::ParseFailure {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        record.validate(vocabulary).map_err(|v| IoError::InvariantViolation {
            path: path.to_path_buf(),
            line: i + 1,
            field: v.field,
            reason: v.reason,
        })?;
        out.push(record);
    }
    Ok(out)
}

/// `cohort.jsonl` -> `cohort.history.jsonl`.
pub fn history_path(cohort: &Path) -> PathBuf {
    let stem = cohort.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    cohort.with_file_name(format!("{stem}.history.jsonl"))
}

/// Expands directories into their `prefix*.jsonl` files, sorted by name.
pub fn expand_inputs(inputs: &[PathBuf], prefix: &str) -> Result<Vec<PathBuf>, IoError> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let entries = std::fs::read_dir(input).map_err(|e| IoError::io(input, e))?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                    name.starts_with(prefix) && name.ends_with(".jsonl")
                })
                .collect();
            found.sort();
            out.extend(found);
        } else if input.exists() {
            out.push(input.clone());
        } else {
            return Err(IoError::io(input, std::io::ErrorKind::NotFound.into()));
        }
    }
    Ok(out)
}
