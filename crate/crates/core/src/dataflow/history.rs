//! Append-only historical store: one JSON record per line.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::DataflowError;
use crate::broker::Notification;
use crate::clock::{iso, parse_iso, SharedClock};

pub const HISTORY_FILE: &str = "history.ndjson";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HistoricalRecord {
    pub seq: u64,
    pub received_at: String,
    pub entity_id: String,
    pub entity_type: String,
    pub attrs: Map<String, Value>,
}

impl HistoricalRecord {
    pub fn received(&self) -> Option<DateTime<Utc>> {
        parse_iso(&self.received_at)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HistoryLimits {
    /// Refuse appends beyond this many records.
    pub max_records: Option<usize>,
}

struct Inner {
    file: File,
    records: Vec<HistoricalRecord>,
}

/// Single-writer log with an in-memory copy for queries.
pub struct HistoryStore {
    path: PathBuf,
    inner: RwLock<Inner>,
    limits: HistoryLimits,
    clock: SharedClock,
}

fn read_records(path: &Path) -> Result<Vec<HistoricalRecord>, DataflowError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(DataflowError::Io(e.to_string())),
    };
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DataflowError::Io(e.to_string()))?;
        let expected = records.len() as u64 + 1;
        let record: HistoricalRecord = serde_json::from_str(&line).map_err(|e| DataflowError::CorruptRecord {
            seq: expected,
            reason: format!("line {}: {e}", n + 1),
        })?;
        if record.seq != expected {
            return Err(DataflowError::CorruptRecord {
                seq: expected,
                reason: format!("line {} carries seq {}", n + 1, record.seq),
            });
        }
        records.push(record);
    }
    Ok(records)
}

impl HistoryStore {
    /// Opens or creates the log at `path`, checking every existing record.
    pub fn open(path: impl AsRef<Path>, limits: HistoryLimits, clock: SharedClock) -> Result<Self, DataflowError> {
        let path = path.as_ref().to_path_buf();
        let records = read_records(&path)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| DataflowError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self {
            path,
            inner: RwLock::new(Inner { file, records }),
            limits,
            clock,
        })
    }

    /// Opens `history.ndjson` inside `dir`, creating `dir` if needed.
    pub fn open_dir(dir: impl AsRef<Path>, limits: HistoryLimits, clock: SharedClock) -> Result<Self, DataflowError> {
        std::fs::create_dir_all(dir.as_ref())
            .map_err(|e| DataflowError::Io(format!("{}: {e}", dir.as_ref().display())))?;
        Self::open(dir.as_ref().join(HISTORY_FILE), limits, clock)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.inner.read().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Vec<HistoricalRecord> {
        self.inner.read().records.clone()
    }

    /// Appends one record per entity, in order, as a single write.
    pub fn append_notification(&self, n: &Notification) -> Result<Vec<u64>, DataflowError> {
        if n.data.is_empty() {
            return Ok(Vec::new());
        }
        let received_at = iso(self.clock.now());
        let mut inner = self.inner.write();
        if let Some(max) = self.limits.max_records {
            if inner.records.len() + n.data.len() > max {
                return Err(DataflowError::StorageFull { max_records: max });
            }
        }
        let mut fresh = Vec::with_capacity(n.data.len());
        for doc in &n.data {
            let mut attrs = doc.as_object().cloned().ok_or_else(|| {
                DataflowError::InvalidSpec("notification entity is not an object".into())
            })?;
            let id = attrs.remove("id").and_then(|v| v.as_str().map(str::to_string));
            let ty = attrs.remove("type").and_then(|v| v.as_str().map(str::to_string));
            let (Some(entity_id), Some(entity_type)) = (id, ty) else {
                return Err(DataflowError::InvalidSpec("notification entity lacks id or type".into()));
            };
            fresh.push(HistoricalRecord {
                seq: inner.records.len() as u64 + fresh.len() as u64 + 1,
                received_at: received_at.clone(),
                entity_id,
                entity_type,
                attrs,
            });
        }
        let mut buf = String::new();
        for r in &fresh {
            buf.push_str(&serde_json::to_string(r).expect("record serializes"));
            buf.push('\n');
        }
        inner
            .file
            .write_all(buf.as_bytes())
            .and_then(|_| inner.file.flush())
            .map_err(|e| DataflowError::Io(e.to_string()))?;
        let seqs = fresh.iter().map(|r| r.seq).collect();
        inner.records.extend(fresh);
        Ok(seqs)
    }

    /// Records of `entity_id` received within `[from, to]`, ascending seq.
    pub fn query(
        &self,
        entity_id: &str,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
    ) -> Result<Vec<HistoricalRecord>, DataflowError> {
        if from > to {
            return Err(DataflowError::BadRange);
        }
        Ok(self
            .inner
            .read()
            .records
            .iter()
            .filter(|r| r.entity_id == entity_id && r.received().is_some_and(|t| from <= t && t <= to))
            .cloned()
            .collect())
    }

    /// Latest state per entity as `keyValues` documents, from the records
    /// with `seq <= up_to` (all when `None`). Reads the file, so a damaged
    /// log is reported here as well as at open.
    pub fn replay(&self, up_to: Option<u64>) -> Result<BTreeMap<String, Value>, DataflowError> {
        let _guard = self.inner.read();
        let records = read_records(&self.path)?;
        Ok(fold(records.iter().take_while(|r| up_to.is_none_or(|k| r.seq <= k))))
    }
}

/// Folds records in order into the latest document per entity.
pub fn fold<'a>(records: impl IntoIterator<Item = &'a HistoricalRecord>) -> BTreeMap<String, Value> {
    let mut state: BTreeMap<String, Value> = BTreeMap::new();
    for r in records {
        let doc = state.entry(r.entity_id.clone()).or_insert_with(|| {
            let mut m = Map::new();
            m.insert("id".into(), Value::String(r.entity_id.clone()));
            m.insert("type".into(), Value::String(r.entity_type.clone()));
            Value::Object(m)
        });
        let obj = doc.as_object_mut().expect("object");
        for (k, v) in &r.attrs {
            obj.insert(k.clone(), v.clone());
        }
    }
    state
}
