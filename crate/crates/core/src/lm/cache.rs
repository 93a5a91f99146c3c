use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LmError, PromptPair, Verdict};

/// sha256 over `model \0 system \0 user`, hex encoded.
pub fn cache_key(model: &str, prompt: &PromptPair) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0]);
    h.update(prompt.system.as_bytes());
    h.update([0]);
    h.update(prompt.user.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub model: String,
    pub verdict: Verdict,
    pub transcript: String,
    pub timestamp: u64,
}

/// Append-only JSON-lines response cache. Later lines win on load.
#[derive(Debug)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, CacheEntry>>,
    writer: Mutex<Option<File>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self { path: None, entries: Mutex::new(HashMap::new()), writer: Mutex::new(None) }
    }

    /// Opens (or creates) a cache file.
    pub fn open(path: &Path) -> Result<Self, LmError> {
        let io = |e: std::io::Error| LmError::Cache(format!("{}: {e}", path.display()));
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: CacheEntry = serde_json::from_str(&line)
                    .map_err(|e| LmError::Cache(format!("{} line {}: {e}", path.display(), n + 1)))?;
                entries.insert(e.key.clone(), e);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(Self { path: Some(path.to_path_buf()), entries: Mutex::new(entries), writer: Mutex::new(Some(file)) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        self.entries.lock().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: String, model: &str, verdict: Verdict, transcript: &str) -> Result<(), LmError> {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let entry = CacheEntry { key: key.clone(), model: model.to_string(), verdict, transcript: transcript.to_string(), timestamp };
        let mut writer = self.writer.lock().expect("cache writer lock");
        if let Some(f) = writer.as_mut() {
            let mut line = serde_json::to_string(&entry).map_err(|e| LmError::Cache(e.to_string()))?;
            line.push('\n');
            f.write_all(line.as_bytes()).and_then(|_| f.flush()).map_err(|e| LmError::Cache(e.to_string()))?;
        }
        self.entries.lock().expect("cache lock").insert(key, entry);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(u: &str) -> PromptPair {
        PromptPair { system: "sys".into(), user: u.into() }
    }

    #[test]
    fn keys_separate_fields() {
        let a = cache_key("m", &PromptPair { system: "ab".into(), user: "c".into() });
        let b = cache_key("m", &PromptPair { system: "a".into(), user: "bc".into() });
        assert_ne!(a, b);
        assert_eq!(a, cache_key("m", &PromptPair { system: "ab".into(), user: "c".into() }));
        assert_ne!(a, cache_key("n", &PromptPair { system: "ab".into(), user: "c".into() }));
    }

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let k = cache_key("m", &pair("q"));
        {
            let c = ResponseCache::open(&path).unwrap();
            c.insert(k.clone(), "m", Verdict::Yes, "Final answer: yes").unwrap();
        }
        let c = ResponseCache::open(&path).unwrap();
        let e = c.get(&k).unwrap();
        assert_eq!(e.verdict, Verdict::Yes);
        assert_eq!(e.transcript, "Final answer: yes");
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(!text.contains("Bearer"));
    }

    #[test]
    fn corrupt_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(ResponseCache::open(&path), Err(LmError::Cache(_))));
    }
}
