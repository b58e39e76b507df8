//! On-disk content-addressed response store.

use super::ModelConfig;
use crate::util::hash_fields;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CachedResponse {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Key over prompt bytes and the sampling parameters that change the answer.
pub fn cache_key(prompt: &str, cfg: &ModelConfig) -> String {
    let t = cfg.temperature.to_bits().to_le_bytes();
    let p = cfg.top_p.to_bits().to_le_bytes();
    let m = cfg.max_tokens.to_le_bytes();
    hash_fields([prompt.as_bytes(), cfg.model.as_bytes(), &t, &p, &m])
}

#[derive(Clone, Debug)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ResponseCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    /// A corrupt entry reads as a miss.
    pub fn get(&self, key: &str) -> Option<CachedResponse> {
        let bytes = fs::read(self.path(key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    /// Write via a temporary file and rename so readers never see partial entries.
    pub fn put(&self, key: &str, value: &CachedResponse) -> io::Result<()> {
        let path = self.path(key);
        let parent = path.parent().expect("sharded path");
        fs::create_dir_all(parent)?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
        tmp.write_all(&serde_json::to_vec(value).expect("serializable"))?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }
}
