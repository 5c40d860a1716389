//! JSON-lines result records.
//!
//! Each record kind goes to its own file, `<dir>/<kind>.jsonl`, one JSON object per
//! line. Files are only ever appended to, under an exclusive lock.
//!
//! ```json
//! {"schema_version":1,"kind":"bound","payload":{...},"timestamp":"2026-01-01T00:00:00.000000000Z",
//!  "toolkit_version":"0.1.0","config_hash":"9f...","wall_time_secs":0.42}
//! ```
//!
//! `payload` depends only on the config and seed; the timestamp and wall time live
//! outside it.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Bound,
    Verify,
    SweepRow,
    TrainTrace,
}

impl RecordKind {
    pub fn file_stem(self) -> &'static str {
        match self {
            RecordKind::Bound => "bound",
            RecordKind::Verify => "verify",
            RecordKind::SweepRow => "sweep_row",
            RecordKind::TrainTrace => "train_trace",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub kind: RecordKind,
    pub payload: serde_json::Value,
    pub timestamp: String,
    pub toolkit_version: String,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
}

impl ResultRecord {
    pub fn new<T: Serialize>(kind: RecordKind, payload: &T, config_hash: &str) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            kind,
            payload: serde_json::to_value(payload)
                .map_err(|e| HarnessError::config(format!("unserializable payload: {e}")))?,
            timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Nanos, true),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.to_string(),
            wall_time_secs: None,
        })
    }

    pub fn with_wall_time(mut self, secs: f64) -> Self {
        self.wall_time_secs = Some(secs);
        self
    }
}

fn append_locked(path: &Path, lines: &str) -> Result<()> {
    let file: File = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| HarnessError::io(path, e))?;
    file.lock().map_err(|e| HarnessError::io(path, e))?;
    let result = (&file).write_all(lines.as_bytes()).and_then(|_| (&file).flush());
    let _ = file.unlock();
    result.map_err(|e| HarnessError::io(path, e))
}

/// Appends each record to the file for its kind and returns the files touched, in
/// first-use order.
pub fn persist(records: &[ResultRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut order: Vec<RecordKind> = Vec::new();
    for r in records {
        if !order.contains(&r.kind) {
            order.push(r.kind);
        }
    }
    let mut paths = Vec::with_capacity(order.len());
    for kind in order {
        let mut lines = String::new();
        for r in records.iter().filter(|r| r.kind == kind) {
            lines.push_str(
                &serde_json::to_string(r).map_err(|e| HarnessError::config(format!("unserializable record: {e}")))?,
            );
            lines.push('\n');
        }
        let path = dir.join(format!("{}.jsonl", kind.file_stem()));
        append_locked(&path, &lines)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads every record from a JSON-lines file.
pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Parse {
                path: path.display().to_string(),
                line: i as u64 + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
