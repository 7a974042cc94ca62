//! On-disk replay cache: one JSON file per request digest.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub digest: String,
    /// Human-readable summary of the request; images appear as size + hash.
    pub request: serde_json::Value,
    pub response: String,
    /// Seconds since the Unix epoch when the entry was recorded.
    pub timestamp: u64,
}

#[derive(Debug, Clone)]
pub struct ReplayCache {
    dir: PathBuf,
}

impl ReplayCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    pub fn lookup(&self, digest: &str) -> Result<Option<CacheEntry>> {
        let path = self.path(digest);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Writes the entry through a temporary file and an atomic rename.
    pub fn store(
        &self,
        digest: &str,
        request: serde_json::Value,
        response: &str,
    ) -> Result<CacheEntry> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let entry = CacheEntry {
            digest: digest.to_string(),
            request,
            response: response.to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        };
        let mut tmp =
            tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let text = serde_json::to_string_pretty(&entry)?;
        tmp.write_all(text.as_bytes())
            .map_err(|e| Error::io(tmp.path(), e))?;
        let path = self.path(digest);
        tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        Ok(entry)
    }

    /// All entries, sorted by digest.
    pub fn list(&self) -> Result<Vec<CacheEntry>> {
        let read = std::fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let mut entries = Vec::new();
        for item in read {
            let path = item.map_err(|e| Error::io(&self.dir, e))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                entries.push(serde_json::from_str::<CacheEntry>(&text)?);
            }
        }
        entries.sort_by(|a, b| a.digest.cmp(&b.digest));
        Ok(entries)
    }
}
