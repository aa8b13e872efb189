use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GenerationRequest, Judge, JudgeError, RawGeneration};

/// One line of the replay cache.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub example_id: String,
    pub fingerprint: String,
    pub texts: Vec<String>,
}

/// In-memory view of an append-only replay cache. Later lines win.
#[derive(Debug, Clone, Default)]
pub struct ReplayCache {
    entries: HashMap<(String, String), Vec<String>>,
}

/// Parses cache text. `origin` only labels error messages.
pub fn parse_cache(text: &str, origin: &str) -> Result<ReplayCache, JudgeError> {
    let mut cache = ReplayCache::default();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: CacheRecord =
            serde_json::from_str(line).map_err(|e| JudgeError::CacheFormat {
                path: origin.to_string(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        cache.insert(rec);
    }
    Ok(cache)
}

impl ReplayCache {
    pub fn load(path: &Path) -> Result<Self, JudgeError> {
        let text = fs::read_to_string(path).map_err(|source| JudgeError::CacheIo {
            path: path.display().to_string(),
            source,
        })?;
        parse_cache(&text, &path.display().to_string())
    }

    pub fn insert(&mut self, rec: CacheRecord) {
        self.entries.insert((rec.example_id, rec.fingerprint), rec.texts);
    }

    pub fn get(&self, example_id: &str, fingerprint: &str) -> Option<&[String]> {
        self.entries
            .get(&(example_id.to_string(), fingerprint.to_string()))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends records to the cache file, one JSON object per line.
    pub fn append(path: &Path, records: &[CacheRecord]) -> Result<(), JudgeError> {
        let io_err = |source| JudgeError::CacheIo {
            path: path.display().to_string(),
            source,
        };
        let mut buf = String::new();
        for rec in records {
            buf.push_str(&serde_json::to_string(rec).expect("cache records serialize"));
            buf.push('\n');
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        f.write_all(buf.as_bytes()).map_err(io_err)?;
        f.flush().map_err(io_err)
    }
}

/// Serves generations from a recorded cache; never touches the network.
#[derive(Debug, Clone)]
pub struct ReplayJudge {
    cache: ReplayCache,
    path: Option<PathBuf>,
}

impl ReplayJudge {
    pub fn new(cache: ReplayCache) -> Self {
        Self { cache, path: None }
    }

    pub fn open(path: &Path) -> Result<Self, JudgeError> {
        Ok(Self {
            cache: ReplayCache::load(path)?,
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }
}

impl Judge for ReplayJudge {
    fn generate(&self, req: &GenerationRequest<'_>) -> Result<RawGeneration, JudgeError> {
        let fingerprint = req.cfg.fingerprint(req.prompt);
        let texts = self
            .cache
            .get(req.example_id, &fingerprint)
            .ok_or_else(|| JudgeError::CacheMiss {
                example_id: req.example_id.to_string(),
                fingerprint: fingerprint.clone(),
            })?;
        Ok(RawGeneration {
            example_id: req.example_id.to_string(),
            texts: texts.to_vec(),
        })
    }

    fn backend_name(&self) -> &'static str {
        "replay"
    }
}
