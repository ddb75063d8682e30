//! String-to-string cache persisted as a sorted JSON object.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use sha2::{Digest, Sha256};

#[derive(Debug, Default)]
pub struct JsonCache {
    path: Option<PathBuf>,
    entries: RwLock<BTreeMap<String, String>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl JsonCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens a cache file, starting empty if it does not exist yet.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let entries = if path.exists() {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            ..Self::default()
        })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let found = self.entries.read().unwrap().get(key).cloned();
        let counter = if found.is_some() { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::Relaxed);
        found
    }

    pub fn insert(&self, key: String, value: String) {
        self.entries.write().unwrap().insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// Writes the cache back to its file (no-op for in-memory caches).
    pub fn save(&self) -> std::io::Result<()> {
        let Some(path) = &self.path else { return Ok(()) };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let text = serde_json::to_string_pretty(&*self.entries.read().unwrap())
            .expect("string map serializes");
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text)?;
        std::fs::rename(tmp, path)
    }
}

/// Hex SHA-256 of the parts, each length-prefixed.
pub fn digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persists_and_counts() {
        let dir = std::env::temp_dir().join(format!("intentkit-cache-{}", std::process::id()));
        let path = dir.join("c.json");
        let c = JsonCache::open(&path).unwrap();
        assert_eq!(c.get("a"), None);
        c.insert("a".into(), "1".into());
        c.save().unwrap();
        let c2 = JsonCache::open(&path).unwrap();
        assert_eq!(c2.get("a").as_deref(), Some("1"));
        assert_eq!((c2.hits(), c2.misses()), (1, 0));
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn digest_is_length_delimited() {
        assert_ne!(digest(&["ab", "c"]), digest(&["a", "bc"]));
    }
}
