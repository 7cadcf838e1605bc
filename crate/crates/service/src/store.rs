//! Append-only JSON-lines rating store. Each record is flushed and synced to
//! disk before [`RatingStore::append`] returns.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use t2vqa_core::data::RatingRecord;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("rating store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("rating store {path}, line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

pub struct RatingStore {
    path: PathBuf,
    file: File,
}

impl RatingStore {
    /// Opens (creating if needed) the store and returns it with its records.
    pub fn open(path: &Path) -> Result<(RatingStore, Vec<RatingRecord>), StoreError> {
        let io = |source| StoreError::Io { path: path.to_path_buf(), source };
        let records = if path.exists() { read_records(path)? } else { Vec::new() };
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok((RatingStore { path: path.to_path_buf(), file }, records))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &RatingRecord) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(record).expect("rating serializes");
        line.push(b'\n');
        let io = |source| StoreError::Io { path: self.path.clone(), source };
        self.file.write_all(&line).map_err(io)?;
        self.file.sync_data().map_err(io)
    }
}

pub fn read_records(path: &Path) -> Result<Vec<RatingRecord>, StoreError> {
    let file = File::open(path).map_err(|source| StoreError::Io { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| StoreError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| StoreError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}
