//! Append-only JSONL replay cache shared by translation and embedding.
//!
//! Each line is one self-contained record. On load, later lines win over
//! earlier lines with the same key, and lines that fail to parse are skipped
//! with a warning. Appends go through a single mutex-guarded writer; lookups
//! take a read lock and may run concurrently with appends.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::hash::Hash;
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Keyed {
    type Key: Eq + Hash + Clone + Send + Sync;
    fn key(&self) -> Self::Key;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug)]
pub struct AppendCache<R: Keyed> {
    records: RwLock<HashMap<R::Key, R>>,
    writer: Option<Mutex<File>>,
    path: Option<PathBuf>,
    warnings: Vec<LoadWarning>,
}

impl<R> AppendCache<R>
where
    R: Keyed + Serialize + DeserializeOwned + Clone,
{
    /// A cache that lives only in memory.
    pub fn in_memory() -> Self {
        Self {
            records: RwLock::new(HashMap::new()),
            writer: None,
            path: None,
            warnings: Vec::new(),
        }
    }

    /// Opens (creating if needed) the cache file at `path`.
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut records = HashMap::new();
        let mut warnings = Vec::new();
        let mut needs_newline = false;
        if path.exists() {
            let mut file = File::open(&path)?;
            for (i, line) in BufReader::new(&file).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<R>(&line) {
                    Ok(r) => {
                        records.insert(r.key(), r);
                    }
                    Err(e) => {
                        log::warn!("{}: skipping corrupt cache line {}: {e}", path.display(), i + 1);
                        warnings.push(LoadWarning {
                            line: i + 1,
                            message: e.to_string(),
                        });
                    }
                }
            }
            // a crash mid-append can leave an unterminated last line
            let len = file.metadata()?.len();
            if len > 0 {
                file.seek(SeekFrom::Start(len - 1))?;
                let mut last = [0u8; 1];
                file.read_exact(&mut last)?;
                needs_newline = last[0] != b'\n';
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        if needs_newline {
            file.write_all(b"\n")?;
        }
        Ok(Self {
            records: RwLock::new(records),
            writer: Some(Mutex::new(file)),
            path: Some(path),
            warnings,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn warnings(&self) -> &[LoadWarning] {
        &self.warnings
    }

    pub fn get(&self, key: &R::Key) -> Option<R> {
        self.records.read().expect("cache lock poisoned").get(key).cloned()
    }

    pub fn contains(&self, key: &R::Key) -> bool {
        self.records.read().expect("cache lock poisoned").contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Persists `record` (one line, flushed) and makes it visible to readers.
    pub fn append(&self, record: R) -> io::Result<()> {
        if let Some(writer) = &self.writer {
            let mut line = serde_json::to_vec(&record)?;
            line.push(b'\n');
            let mut f = writer.lock().expect("cache writer poisoned");
            f.write_all(&line)?;
            f.flush()?;
        }
        self.records
            .write()
            .expect("cache lock poisoned")
            .insert(record.key(), record);
        Ok(())
    }

    /// Snapshot of all records, in no particular order.
    pub fn records(&self) -> Vec<R> {
        self.records
            .read()
            .expect("cache lock poisoned")
            .values()
            .cloned()
            .collect()
    }
}
