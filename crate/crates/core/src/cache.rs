//! Durable key-value cache: a single append-only JSON-Lines log with an
//! in-memory index, compacted when opened.
//!
//! Each line is either `{"k": key, "v": value}` or a tombstone
//! `{"k": key, "del": true}` written when an entry is evicted. Unreadable
//! lines are skipped on load, so a damaged record becomes a cache miss.
//! Writes go through one mutex-guarded file handle.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::ClaimAssessment;
use crate::util::{collapse_whitespace, sha256_hex};

#[derive(Serialize, Deserialize)]
struct Record {
    k: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v: Option<Value>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    del: bool,
}

struct Slot {
    value: Value,
    tick: u64,
}

#[derive(Default)]
struct Index {
    map: HashMap<String, Slot>,
    by_tick: BTreeMap<u64, String>,
    tick: u64,
}

struct Inner {
    index: Index,
    file: File,
}

impl Index {
    fn touch(&mut self, key: &str) {
        self.tick += 1;
        let tick = self.tick;
        if let Some(slot) = self.map.get_mut(key) {
            self.by_tick.remove(&slot.tick);
            slot.tick = tick;
            self.by_tick.insert(tick, key.to_string());
        }
    }

    fn insert(&mut self, key: String, value: Value) {
        self.tick += 1;
        if let Some(old) = self.map.insert(key.clone(), Slot { value, tick: self.tick }) {
            self.by_tick.remove(&old.tick);
        }
        self.by_tick.insert(self.tick, key);
    }

    fn remove(&mut self, key: &str) {
        if let Some(old) = self.map.remove(key) {
            self.by_tick.remove(&old.tick);
        }
    }

    /// Drops least-recently-used entries above `max`; returns their keys.
    fn evict(&mut self, max: usize) -> Vec<String> {
        let mut out = Vec::new();
        while self.map.len() > max {
            let Some((_, key)) = self.by_tick.pop_first() else { break };
            self.map.remove(&key);
            out.push(key);
        }
        out
    }
}

pub struct LogStore {
    path: PathBuf,
    max_entries: usize,
    corrupt_on_load: usize,
    inner: Mutex<Inner>,
}

impl LogStore {
    pub fn open(path: impl Into<PathBuf>, max_entries: usize) -> io::Result<Self> {
        let path = path.into();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let mut index = Index::default();
        let mut corrupt = 0;
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for line in reader.split(b'\n') {
                let line = line?;
                if line.iter().all(u8::is_ascii_whitespace) {
                    continue;
                }
                match serde_json::from_slice::<Record>(&line) {
                    Ok(Record { k, del: true, .. }) => index.remove(&k),
                    Ok(Record { k, v: Some(v), .. }) => index.insert(k, v),
                    _ => corrupt += 1,
                }
            }
        }
        index.evict(max_entries);

        // compaction: rewrite survivors oldest-first, then swap in atomically
        let tmp = path.with_extension("compact");
        {
            let mut w = io::BufWriter::new(File::create(&tmp)?);
            for key in index.by_tick.values() {
                let rec = Record { k: key.clone(), v: Some(index.map[key].value.clone()), del: false };
                serde_json::to_writer(&mut w, &rec)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        fs::rename(&tmp, &path)?;
        let file = OpenOptions::new().append(true).open(&path)?;

        if corrupt > 0 {
            tracing::warn!(path = %path.display(), corrupt, "skipped unreadable cache records");
        }
        Ok(LogStore { path, max_entries, corrupt_on_load: corrupt, inner: Mutex::new(Inner { index, file }) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().index.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of lines skipped as unreadable when the log was opened.
    pub fn corrupt_on_load(&self) -> usize {
        self.corrupt_on_load
    }

    pub fn get(&self, key: &str) -> Option<Value> {
        let mut inner = self.inner.lock().unwrap();
        let value = inner.index.map.get(key)?.value.clone();
        inner.index.touch(key);
        Some(value)
    }

    /// Typed get; a value that no longer deserializes is a miss.
    pub fn get_as<T: DeserializeOwned>(&self, key: &str) -> Option<T> {
        serde_json::from_value(self.get(key)?).ok()
    }

    pub fn put(&self, key: &str, value: Value) -> io::Result<()> {
        let mut inner = self.inner.lock().unwrap();
        let rec = Record { k: key.to_string(), v: Some(value.clone()), del: false };
        let mut line = serde_json::to_vec(&rec)?;
        line.push(b'\n');
        inner.file.write_all(&line)?;
        inner.index.insert(key.to_string(), value);
        let evicted = inner.index.evict(self.max_entries);
        for k in evicted {
            let mut line = serde_json::to_vec(&Record { k, v: None, del: true })?;
            line.push(b'\n');
            inner.file.write_all(&line)?;
        }
        inner.file.flush()
    }

    pub fn put_as<T: Serialize>(&self, key: &str, value: &T) -> io::Result<()> {
        self.put(key, serde_json::to_value(value)?)
    }
}

/// Cache of final assessments keyed by SHA-256(normalized claim text + config fingerprint).
pub struct AssessmentCache {
    store: LogStore,
}

pub fn assessment_key(claim_text: &str, fingerprint: &str) -> String {
    use unicode_normalization::UnicodeNormalization;
    let norm: String = collapse_whitespace(claim_text).nfkc().collect();
    sha256_hex(format!("{norm}{fingerprint}").as_bytes())
}

impl AssessmentCache {
    pub fn open(path: impl Into<PathBuf>, max_entries: usize) -> io::Result<Self> {
        Ok(AssessmentCache { store: LogStore::open(path, max_entries)? })
    }

    pub fn get(&self, claim_text: &str, fingerprint: &str) -> Option<ClaimAssessment> {
        let hit: ClaimAssessment = self.store.get_as(&assessment_key(claim_text, fingerprint))?;
        (hit.config_fingerprint == fingerprint).then_some(hit)
    }

    pub fn put(&self, assessment: &ClaimAssessment) -> io::Result<()> {
        let key = assessment_key(&assessment.claim.text, &assessment.config_fingerprint);
        self.store.put_as(&key, assessment)
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }
}
