//! Per-request timing records and their aggregation.

use std::collections::HashMap;
use std::fmt;
use std::fs::OpenOptions;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Retrieval-augmented CQ answering.
    Rag,
    /// Textual to categorical conversion.
    Categorize,
    Filter,
    Keywords,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Rag => "rag",
            Stage::Categorize => "categorize",
            Stage::Filter => "filter",
            Stage::Keywords => "keywords",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rag" => Ok(Stage::Rag),
            "categorize" => Ok(Stage::Categorize),
            "filter" => Ok(Stage::Filter),
            "keywords" => Ok(Stage::Keywords),
            other => Err(Error::UnknownStage(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimingEntry {
    pub unique_id: String,
    pub doi: String,
    pub endpoint: String,
    pub stage: Stage,
    pub duration_ms: u64,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TimingRow {
    unique_id: String,
    doi: String,
    endpoint: String,
    stage: String,
    duration_ms: u64,
    timestamp_iso8601: String,
}

impl From<&TimingEntry> for TimingRow {
    fn from(e: &TimingEntry) -> Self {
        Self {
            unique_id: e.unique_id.clone(),
            doi: e.doi.clone(),
            endpoint: e.endpoint.clone(),
            stage: e.stage.to_string(),
            duration_ms: e.duration_ms,
            timestamp_iso8601: e.timestamp.to_rfc3339_opts(SecondsFormat::Millis, true),
        }
    }
}

impl TryFrom<TimingRow> for TimingEntry {
    type Error = Error;

    fn try_from(r: TimingRow) -> Result<Self> {
        let timestamp = DateTime::parse_from_rfc3339(&r.timestamp_iso8601)
            .map_err(|e| Error::InvalidInput(format!("timestamp `{}`: {e}", r.timestamp_iso8601)))?
            .with_timezone(&Utc);
        Ok(Self {
            unique_id: r.unique_id,
            doi: r.doi,
            endpoint: r.endpoint,
            stage: r.stage.parse()?,
            duration_ms: r.duration_ms,
            timestamp,
        })
    }
}

/// Ordered timing entries. Appending is the only mutation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TimingLog {
    entries: Vec<TimingEntry>,
}

impl TimingLog {
    pub fn new(entries: Vec<TimingEntry>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[TimingEntry] {
        &self.entries
    }

    pub fn push(&mut self, e: TimingEntry) {
        self.entries.push(e);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn for_endpoint(&self, endpoint: &str) -> TimingLog {
        TimingLog::new(
            self.entries
                .iter()
                .filter(|e| e.endpoint == endpoint)
                .cloned()
                .collect(),
        )
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let entries = rdr
            .deserialize::<TimingRow>()
            .map(|row| row.map_err(Error::from).and_then(TimingEntry::try_from))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries })
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            w.serialize(TimingRow::from(e))?;
        }
        if self.entries.is_empty() {
            w.write_record([
                "unique_id",
                "doi",
                "endpoint",
                "stage",
                "duration_ms",
                "timestamp_iso8601",
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("flushing csv", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Append to `path`, writing the header only when the file is new.
    pub fn append_csv(&self, path: &Path) -> Result<()> {
        let fresh = !path.exists() || std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        if fresh && self.entries.is_empty() {
            w.write_record([
                "unique_id",
                "doi",
                "endpoint",
                "stage",
                "duration_ms",
                "timestamp_iso8601",
            ])?;
        }
        for e in &self.entries {
            w.serialize(TimingRow::from(e))?;
        }
        w.flush()
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(())
    }
}

/// Keep one entry per `unique_id`: the one with the latest timestamp, the
/// later line winning ties. Survivors keep their relative order.
pub fn dedupe_timing_logs(log: &TimingLog) -> TimingLog {
    let mut winner: HashMap<&str, usize> = HashMap::new();
    for (i, e) in log.entries.iter().enumerate() {
        winner
            .entry(e.unique_id.as_str())
            .and_modify(|w| {
                if e.timestamp >= log.entries[*w].timestamp {
                    *w = i;
                }
            })
            .or_insert(i);
    }
    let mut keep: Vec<usize> = winner.into_values().collect();
    keep.sort_unstable();
    TimingLog::new(keep.into_iter().map(|i| log.entries[i].clone()).collect())
}

/// Total duration in milliseconds of all entries for `stage`.
pub fn sum_runtime(log: &TimingLog, stage: &str) -> Result<u64> {
    let stage: Stage = stage.parse()?;
    Ok(log
        .entries
        .iter()
        .filter(|e| e.stage == stage)
        .map(|e| e.duration_ms)
        .sum())
}

/// `"71hr 3min"`, rounding to the nearest minute.
pub fn format_hours_minutes(ms: u64) -> String {
    let minutes = (ms + 30_000) / 60_000;
    format!("{}hr {}min", minutes / 60, minutes % 60)
}

pub fn ms_to_hours(ms: u64) -> f64 {
    ms as f64 / 3_600_000.0
}

/// Thread-safe append sink used by the gateway.
#[derive(Debug, Default)]
pub struct TimingSink {
    entries: Mutex<Vec<TimingEntry>>,
}

impl TimingSink {
    pub fn record(&self, e: TimingEntry) {
        self.entries.lock().expect("timing sink poisoned").push(e);
    }

    /// Remove and return everything recorded so far, sorted by id then time
    /// so the result does not depend on thread interleaving.
    pub fn drain(&self) -> TimingLog {
        let mut entries = std::mem::take(&mut *self.entries.lock().expect("timing sink poisoned"));
        entries.sort_by(|a, b| (&a.unique_id, a.timestamp).cmp(&(&b.unique_id, b.timestamp)));
        TimingLog::new(entries)
    }

    pub fn snapshot(&self) -> TimingLog {
        TimingLog::new(self.entries.lock().expect("timing sink poisoned").clone())
    }
}
