use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{EngineError, Role, Usage};

pub const CACHE_FILE: &str = "responses.jsonl";

/// One stored response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub digest: String,
    pub role: Role,
    pub payload: String,
    pub usage: Usage,
    pub usage_estimated: bool,
}

/// Response store keyed by request digest, optionally backed by an
/// append-only JSONL file.
///
/// [`ResponseCache::lock_key`] serializes work on one key so that concurrent
/// identical requests produce a single live call.
#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: Mutex<HashMap<String, CacheEntry>>,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache::default()
    }

    /// Opens (or creates) `dir/responses.jsonl` and loads its entries.
    ///
    /// Unparseable lines, such as a torn final write, are skipped with a warning.
    pub fn open(dir: &Path) -> Result<Self, EngineError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(CACHE_FILE);
        let mut entries = HashMap::new();
        let mut torn_tail = false;
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheEntry>(&line) {
                    Ok(e) => {
                        entries.entry(e.digest.clone()).or_insert(e);
                    }
                    Err(err) => log::warn!("{}:{}: skipping cache line: {err}", path.display(), n + 1),
                }
            }
            let bytes = fs::read(&path)?;
            torn_tail = bytes.last().is_some_and(|b| *b != b'\n');
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        if torn_tail {
            file.write_all(b"\n")?;
        }
        Ok(ResponseCache {
            entries: Mutex::new(entries),
            key_locks: Mutex::default(),
            file: Some(Mutex::new(file)),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, digest: &str) -> Option<CacheEntry> {
        self.entries
            .lock()
            .expect("cache lock poisoned")
            .get(digest)
            .cloned()
    }

    /// Per-key mutex; hold the returned lock across lookup, live call and insert.
    pub fn lock_key(&self, digest: &str) -> Arc<Mutex<()>> {
        self.key_locks
            .lock()
            .expect("cache lock poisoned")
            .entry(digest.to_string())
            .or_default()
            .clone()
    }

    pub fn insert(&self, entry: CacheEntry) -> Result<(), EngineError> {
        if let Some(file) = &self.file {
            let mut line = serde_json::to_string(&entry)?;
            line.push('\n');
            let mut f = file.lock().expect("cache file lock poisoned");
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.entries
            .lock()
            .expect("cache lock poisoned")
            .entry(entry.digest.clone())
            .or_insert(entry);
        Ok(())
    }
}
