//! Append-only JSON-lines persistence.
//!
//! Each store is one file (`events.jsonl`, `records.jsonl`, `spikes.jsonl`).
//! Lines are never rewritten: updates append a `replace` entry and merges
//! append tombstones plus the replacement survivor. Reloading folds the log
//! back into the live set in first-insertion order.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::model::{ContentRecord, EventAbstraction, InvariantViolation, SpikeRecord, SCHEMA_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("record rejected: {0}")]
    Invalid(#[from] InvariantViolation),
    #[error("id `{0}` already exists in the store")]
    DuplicateId(String),
    #[error("id `{0}` is not a live record")]
    UnknownId(String),
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("unsupported schema version {found} at {path}:{line}")]
    SchemaVersion { path: PathBuf, line: usize, found: u32 },
    #[error("store I/O failed: {0}")]
    Io(#[from] io::Error),
}

impl StoreError {
    /// I/O failures may succeed on retry; everything else is permanent.
    pub fn is_retryable(&self) -> bool {
        matches!(self, StoreError::Io(_))
    }
}

/// A type that can live in a [`JsonlStore`].
pub trait Storable: Serialize + DeserializeOwned + Clone {
    const FILE_NAME: &'static str;
    const ID_PREFIX: &'static str;

    fn id(&self) -> &str;
    fn set_id(&mut self, id: String);
    fn check(&self) -> Result<(), InvariantViolation>;
}

impl Storable for EventAbstraction {
    const FILE_NAME: &'static str = "events.jsonl";
    const ID_PREFIX: &'static str = "evt";

    fn id(&self) -> &str {
        &self.event_id
    }
    fn set_id(&mut self, id: String) {
        self.event_id = id;
    }
    fn check(&self) -> Result<(), InvariantViolation> {
        self.validate()
    }
}

impl Storable for ContentRecord {
    const FILE_NAME: &'static str = "records.jsonl";
    const ID_PREFIX: &'static str = "rec";

    fn id(&self) -> &str {
        &self.record_id
    }
    fn set_id(&mut self, id: String) {
        self.record_id = id;
    }
    fn check(&self) -> Result<(), InvariantViolation> {
        self.validate()
    }
}

impl Storable for SpikeRecord {
    const FILE_NAME: &'static str = "spikes.jsonl";
    const ID_PREFIX: &'static str = "spk";

    fn id(&self) -> &str {
        &self.spike_id
    }
    fn set_id(&mut self, id: String) {
        self.spike_id = id;
    }
    fn check(&self) -> Result<(), InvariantViolation> {
        self.validate()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Entry<T> {
    Put(T),
    Replace(T),
    Tombstone { id: String, absorbed_into: Option<String> },
}

#[derive(Serialize, Deserialize)]
struct Line<T> {
    schema_version: u32,
    #[serde(flatten)]
    entry: Entry<T>,
}

/// Single-writer append-only store for one record type.
pub struct JsonlStore<T: Storable> {
    path: PathBuf,
    live: Vec<T>,
    index: HashMap<String, usize>,
    seen: HashSet<String>,
    puts: u64,
}

impl<T: Storable> JsonlStore<T> {
    /// Opens (or creates) `dir/T::FILE_NAME` and replays its log.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        fs::create_dir_all(dir.as_ref())?;
        Self::open_file(dir.as_ref().join(T::FILE_NAME))
    }

    pub fn open_file(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let mut store = Self { path, live: Vec::new(), index: HashMap::new(), seen: HashSet::new(), puts: 0 };
        if store.path.exists() {
            store.replay()?;
        } else {
            if let Some(parent) = store.path.parent() {
                fs::create_dir_all(parent)?;
            }
            File::create(&store.path)?;
        }
        Ok(store)
    }

    fn replay(&mut self) -> Result<(), StoreError> {
        let reader = BufReader::new(File::open(&self.path)?);
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |message: String| StoreError::Corrupt { path: self.path.clone(), line: n + 1, message };
            let parsed: Line<T> = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            if parsed.schema_version != SCHEMA_VERSION {
                return Err(StoreError::SchemaVersion { path: self.path.clone(), line: n + 1, found: parsed.schema_version });
            }
            match parsed.entry {
                Entry::Put(r) => {
                    let id = r.id().to_string();
                    if !self.seen.insert(id.clone()) {
                        return Err(corrupt(format!("duplicate id `{id}`")));
                    }
                    self.puts += 1;
                    self.index.insert(id, self.live.len());
                    self.live.push(r);
                }
                Entry::Replace(r) => {
                    let slot = *self.index.get(r.id()).ok_or_else(|| corrupt(format!("replace of unknown id `{}`", r.id())))?;
                    self.live[slot] = r;
                }
                Entry::Tombstone { id, .. } => {
                    if !self.index.contains_key(&id) {
                        return Err(corrupt(format!("tombstone of unknown id `{id}`")));
                    }
                    self.remove_live(&id);
                }
            }
        }
        Ok(())
    }

    fn remove_live(&mut self, id: &str) {
        if let Some(slot) = self.index.remove(id) {
            self.live.remove(slot);
            for v in self.index.values_mut() {
                if *v > slot {
                    *v -= 1;
                }
            }
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Live records in first-insertion order.
    pub fn records(&self) -> &[T] {
        &self.live
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&T> {
        self.index.get(id).map(|&i| &self.live[i])
    }

    fn next_id(&self) -> String {
        let mut seq = self.puts + 1;
        loop {
            let id = format!("{}-{seq:06}", T::ID_PREFIX);
            if !self.seen.contains(&id) {
                return id;
            }
            seq += 1;
        }
    }

    fn write_lines(&self, lines: &[String]) -> Result<(), StoreError> {
        let file = OpenOptions::new().append(true).open(&self.path)?;
        let original_len = file.metadata()?.len();
        let mut buf = String::new();
        for l in lines {
            buf.push_str(l);
            buf.push('\n');
        }
        let mut writer = BufWriter::new(&file);
        let result = writer.write_all(buf.as_bytes()).and_then(|_| writer.flush());
        drop(writer);
        if let Err(e) = result {
            // Roll back a torn write so the log never holds half a batch.
            let _ = file.set_len(original_len);
            return Err(e.into());
        }
        Ok(())
    }

    fn encode(entry: Entry<T>) -> Result<String, StoreError> {
        serde_json::to_string(&Line { schema_version: SCHEMA_VERSION, entry })
            .map_err(|e| StoreError::Io(io::Error::new(io::ErrorKind::InvalidData, e)))
    }

    /// Appends a new record, assigning an id when it has none.
    pub fn append(&mut self, mut record: T) -> Result<String, StoreError> {
        record.check()?;
        if record.id().is_empty() {
            record.set_id(self.next_id());
        } else if self.seen.contains(record.id()) {
            return Err(StoreError::DuplicateId(record.id().to_string()));
        }
        let id = record.id().to_string();
        self.write_lines(&[Self::encode(Entry::Put(record.clone()))?])?;
        self.seen.insert(id.clone());
        self.puts += 1;
        self.index.insert(id.clone(), self.live.len());
        self.live.push(record);
        Ok(id)
    }

    /// Appends a new version of a live record.
    pub fn replace(&mut self, record: T) -> Result<(), StoreError> {
        record.check()?;
        let slot = *self.index.get(record.id()).ok_or_else(|| StoreError::UnknownId(record.id().to_string()))?;
        self.write_lines(&[Self::encode(Entry::Replace(record.clone()))?])?;
        self.live[slot] = record;
        Ok(())
    }

    /// Tombstones `absorbed` and replaces `survivor` in one write.
    pub fn commit_merge(&mut self, survivor: T, absorbed: &[String]) -> Result<(), StoreError> {
        survivor.check()?;
        if !self.index.contains_key(survivor.id()) {
            return Err(StoreError::UnknownId(survivor.id().to_string()));
        }
        for id in absorbed {
            if !self.index.contains_key(id) || id == survivor.id() {
                return Err(StoreError::UnknownId(id.clone()));
            }
        }
        let mut lines = Vec::with_capacity(absorbed.len() + 1);
        for id in absorbed {
            lines.push(Self::encode(Entry::Tombstone { id: id.clone(), absorbed_into: Some(survivor.id().to_string()) })?);
        }
        lines.push(Self::encode(Entry::Replace(survivor.clone()))?);
        self.write_lines(&lines)?;
        for id in absorbed {
            self.remove_live(id);
        }
        let slot = self.index[survivor.id()];
        self.live[slot] = survivor;
        Ok(())
    }
}

/// Writes plain records as JSON lines, each stamped with `schema_version`.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> io::Result<()> {
    #[derive(Serialize)]
    struct Versioned<'a, T> {
        schema_version: u32,
        #[serde(flatten)]
        item: &'a T,
    }
    if let Some(parent) = path.as_ref().parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &Versioned { schema_version: SCHEMA_VERSION, item })?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Reads records written by [`write_jsonl`]; the version field is ignored
/// by the target type.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> io::Result<Vec<T>> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.as_ref().display(), n + 1))
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Read-only view of a store file's live records.
pub fn load_live<T: Storable>(path: impl Into<PathBuf>) -> Result<Vec<T>, StoreError> {
    let path = path.into();
    if !path.exists() {
        return Err(StoreError::Io(io::Error::new(io::ErrorKind::NotFound, format!("{} not found", path.display()))));
    }
    Ok(JsonlStore::<T>::open_file(path)?.live)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn event(desc: &str) -> EventAbstraction {
        EventAbstraction {
            event_id: String::new(),
            date: "2025-05-31".into(),
            time: "21:00".into(),
            description: desc.into(),
            event_time_utc: None,
            category: Some("Sports".into()),
            entities: None,
            platforms: None,
            data_per_user_mb: None,
            audience_size: None,
            continent_relevance: None,
            nation_relevance: None,
            spike_duration_hours: None,
            likelihood: Some(7),
            semantic_signature: None,
            source_records: vec!["rec-1".into()],
            first_mentioned_at: Utc.with_ymd_and_hms(2025, 5, 1, 0, 0, 0).unwrap(),
            merge_history: vec![],
            low_confidence: vec![],
            stale_fields: vec![],
        }
    }

    #[test]
    fn append_assigns_unique_ids_that_survive_reload() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = JsonlStore::<EventAbstraction>::open(dir.path()).unwrap();
        let a = store.append(event("Cup final")).unwrap();
        let b = store.append(event("Cup final")).unwrap();
        assert_ne!(a, b);
        drop(store);

        let mut reopened = JsonlStore::<EventAbstraction>::open(dir.path()).unwrap();
        let ids: Vec<&str> = reopened.records().iter().map(|e| e.event_id.as_str()).collect();
        assert_eq!(ids, vec![a.as_str(), b.as_str()]);
        let c = reopened.append(event("Another")).unwrap();
        assert!(c != a && c != b);
    }

    #[test]
    fn invalid_record_rejected_with_field() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = JsonlStore::<EventAbstraction>::open(dir.path()).unwrap();
        let mut bad = event("x");
        bad.likelihood = Some(11);
        match store.append(bad) {
            Err(StoreError::Invalid(v)) => assert_eq!(v.field, "likelihood"),
            other => panic!("expected rejection, got {other:?}"),
        }
        assert!(store.is_empty());
        assert_eq!(fs::read_to_string(store.path()).unwrap(), "");
    }

    #[test]
    fn explicit_duplicate_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = JsonlStore::<EventAbstraction>::open(dir.path()).unwrap();
        let mut e = event("x");
        e.event_id = "evt-a".into();
        store.append(e.clone()).unwrap();
        assert!(matches!(store.append(e), Err(StoreError::DuplicateId(_))));
    }

    #[test]
    fn merge_tombstones_and_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = JsonlStore::<EventAbstraction>::open(dir.path()).unwrap();
        let a = store.append(event("a")).unwrap();
        let b = store.append(event("b")).unwrap();
        let c = store.append(event("c")).unwrap();
        let mut survivor = store.get(&a).unwrap().clone();
        survivor.merge_history.push(b.clone());
        store.commit_merge(survivor, std::slice::from_ref(&b)).unwrap();
        assert_eq!(store.len(), 2);

        let reopened = JsonlStore::<EventAbstraction>::open(dir.path()).unwrap();
        let ids: Vec<&str> = reopened.records().iter().map(|e| e.event_id.as_str()).collect();
        assert_eq!(ids, vec![a.as_str(), c.as_str()]);
        assert_eq!(reopened.get(&a).unwrap().merge_history, vec![b.clone()]);
        // Tombstoned ids are never reissued.
        let mut again = event("b again");
        again.event_id = b;
        let mut reopened = reopened;
        assert!(matches!(reopened.append(again), Err(StoreError::DuplicateId(_))));
    }

    #[test]
    fn every_line_carries_schema_version() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = JsonlStore::<EventAbstraction>::open(dir.path()).unwrap();
        store.append(event("a")).unwrap();
        let text = fs::read_to_string(store.path()).unwrap();
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["op"], "put");
        assert_eq!(v["description"], "a");
    }

    #[test]
    fn corrupt_line_reported_with_position() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("events.jsonl"), "{\"schema_version\":1,\"op\":\"put\"}\n").unwrap();
        match JsonlStore::<EventAbstraction>::open(dir.path()) {
            Err(StoreError::Corrupt { line, .. }) => assert_eq!(line, 1),
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("expected corruption error"),
        }
    }

    #[test]
    fn io_errors_are_retryable() {
        let e = StoreError::Io(io::Error::other("disk"));
        assert!(e.is_retryable());
        assert!(!StoreError::DuplicateId("x".into()).is_retryable());
    }
}
