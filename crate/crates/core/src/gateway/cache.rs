//! Disk cache for completions, keyed by the prompt digest.
//!
//! Layout: `<cache_dir>/<model_id>/<hash>.json`, one record holding both the
//! request and the response. Writes go through a temp file plus rename and
//! are serialized by a lock.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Serialize, Deserialize)]
pub struct CacheRecord {
    pub model_id: String,
    pub prompt_hash: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub text: String,
    pub latency_ms: u64,
}

pub struct DiskCache {
    root: PathBuf,
    write_lock: Mutex<()>,
}

fn sanitize_component(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

impl DiskCache {
    pub fn open(root: &Path) -> Result<Self, GatewayError> {
        fs::create_dir_all(root).map_err(|source| GatewayError::CacheIo {
            path: root.display().to_string(),
            source,
        })?;
        Ok(DiskCache {
            root: root.to_path_buf(),
            write_lock: Mutex::new(()),
        })
    }

    fn record_path(&self, model_id: &str, hash: &str) -> PathBuf {
        self.root
            .join(sanitize_component(model_id))
            .join(format!("{hash}.json"))
    }

    pub fn get(&self, model_id: &str, hash: &str) -> Result<Option<String>, GatewayError> {
        let path = self.record_path(model_id, hash);
        match fs::read_to_string(&path) {
            Ok(contents) => {
                let record: CacheRecord =
                    serde_json::from_str(&contents).map_err(|e| GatewayError::CacheIo {
                        path: path.display().to_string(),
                        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
                    })?;
                Ok(Some(record.text))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(GatewayError::CacheIo {
                path: path.display().to_string(),
                source,
            }),
        }
    }

    pub fn put(&self, record: &CacheRecord) -> Result<(), GatewayError> {
        let path = self.record_path(&record.model_id, &record.prompt_hash);
        let io_err = |source| GatewayError::CacheIo {
            path: path.display().to_string(),
            source,
        };
        let _guard = self.write_lock.lock().unwrap();
        let dir = path.parent().expect("record path has a parent");
        fs::create_dir_all(dir).map_err(io_err)?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(record).expect("record serializes"))
            .map_err(io_err)?;
        fs::rename(&tmp, &path).map_err(io_err)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_and_sanitizes_model_ids() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        let record = CacheRecord {
            model_id: "org/model:v1".into(),
            prompt_hash: "abc123".into(),
            prompt: "p".into(),
            temperature: 0.0,
            max_tokens: 16,
            seed: None,
            text: "B".into(),
            latency_ms: 3,
        };
        assert!(cache.get("org/model:v1", "abc123").unwrap().is_none());
        cache.put(&record).unwrap();
        assert_eq!(cache.get("org/model:v1", "abc123").unwrap().unwrap(), "B");
        assert!(dir.path().join("org_model_v1").is_dir());
    }
}
