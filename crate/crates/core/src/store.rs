//! Append-only record files keyed for resumability.
//!
//! Records are appended one per line while a stage runs, so an interrupted
//! run loses at most the line being written. At the end of a stage the file
//! is rewritten in key order, which makes its bytes independent of worker
//! scheduling.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;
use tracing::warn;

use crate::error::{Error, Result};

pub trait Record: Serialize + DeserializeOwned + Clone + Send + Sync {
    type Key: Ord + Clone + Send + Sync;
    fn key(&self) -> Self::Key;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreFormat {
    /// One JSON object per line.
    Jsonl,
    /// CSV with a header row.
    Csv,
}

impl StoreFormat {
    fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => StoreFormat::Csv,
            _ => StoreFormat::Jsonl,
        }
    }
}

pub struct RecordStore<R: Record> {
    path: PathBuf,
    format: StoreFormat,
    records: Mutex<BTreeMap<R::Key, R>>,
    writer: Mutex<Option<File>>,
}

impl<R: Record> RecordStore<R> {
    /// Open (or create on first append) the store at `path`; the format
    /// follows the extension (`.csv` or anything else for JSON lines).
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let format = StoreFormat::from_path(&path);
        let records = if path.exists() {
            read_records::<R>(&path, format)?
        } else {
            Vec::new()
        };
        let records = records.into_iter().map(|r| (r.key(), r)).collect();
        Ok(Self {
            path,
            format,
            records: Mutex::new(records),
            writer: Mutex::new(None),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, key: &R::Key) -> bool {
        self.records.lock().expect("store poisoned").contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All records in key order.
    pub fn records(&self) -> Vec<R> {
        self.records.lock().expect("store poisoned").values().cloned().collect()
    }

    pub fn append(&self, record: R) -> Result<()> {
        let line = self.encode(&record, false)?;
        {
            let mut guard = self.writer.lock().expect("store writer poisoned");
            if guard.is_none() {
                if let Some(dir) = self.path.parent() {
                    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
                }
                let fresh = fs::metadata(&self.path).map(|m| m.len() == 0).unwrap_or(true);
                let mut file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&self.path)
                    .map_err(|e| Error::io(format!("opening {}", self.path.display()), e))?;
                if fresh && self.format == StoreFormat::Csv {
                    let header = self.encode(&record, true)?;
                    let header = header.lines().next().unwrap_or_default();
                    writeln!(file, "{header}").map_err(|e| Error::io("writing header", e))?;
                }
                *guard = Some(file);
            }
            let file = guard.as_mut().expect("writer initialised");
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| Error::io(format!("appending to {}", self.path.display()), e))?;
        }
        self.records
            .lock()
            .expect("store poisoned")
            .insert(record.key(), record);
        Ok(())
    }

    fn encode(&self, record: &R, with_header: bool) -> Result<String> {
        match self.format {
            StoreFormat::Jsonl => Ok(format!("{}\n", serde_json::to_string(record)?)),
            StoreFormat::Csv => {
                let mut w = csv::WriterBuilder::new()
                    .has_headers(with_header)
                    .from_writer(Vec::new());
                w.serialize(record)?;
                let bytes = w.into_inner().map_err(|e| Error::io("encoding csv", e.into_error()))?;
                Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
            }
        }
    }

    /// Rewrite the file with one record per key, in key order.
    pub fn canonicalize(&self) -> Result<()> {
        let records = self.records();
        *self.writer.lock().expect("store writer poisoned") = None;
        write_records(&self.path, &records)
    }
}

/// Write `records` to `path` (format by extension), replacing it atomically.
pub fn write_records<R: Serialize>(path: &Path, records: &[R]) -> Result<()> {
    let format = StoreFormat::from_path(path);
    let mut out = Vec::new();
    match format {
        StoreFormat::Jsonl => {
            for r in records {
                out.extend_from_slice(serde_json::to_string(r)?.as_bytes());
                out.push(b'\n');
            }
        }
        StoreFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            for r in records {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| Error::io("encoding csv", e))?;
        }
    }
    write_atomic(path, &out)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
}

/// Read every record; a trailing line without newline (an interrupted
/// append) is discarded.
pub fn read_records<R: DeserializeOwned>(path: &Path, format: StoreFormat) -> Result<Vec<R>> {
    let mut text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if !text.is_empty() && !text.ends_with('\n') {
        let cut = text.rfind('\n').map_or(0, |i| i + 1);
        warn!(path = %path.display(), "discarding incomplete trailing record");
        text.truncate(cut);
    }
    let format_err = |line: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    match format {
        StoreFormat::Jsonl => text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| format_err(i + 1, e.to_string())))
            .collect(),
        StoreFormat::Csv => csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .enumerate()
            .map(|(i, r)| r.map_err(|e| format_err(i + 2, e.to_string())))
            .collect(),
    }
}

/// Read a store file by extension, or fail naming the stage that makes it.
pub fn read_artifact<R: DeserializeOwned>(path: &Path, stage: &'static str) -> Result<Vec<R>> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            stage,
        });
    }
    read_records(path, StoreFormat::from_path(path))
}
