use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CacheKey, ChatRequest, ChatResponse, FinishReason, GatewayError, ResponseSource};

/// On-disk form of one cached exchange: `<dir>/<fingerprint>.json`.
///
/// The canonicalized request is stored next to the response so a cache
/// directory doubles as a readable fixture set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub fingerprint: CacheKey,
    pub request: ChatRequest,
    pub content: String,
    pub finish_reason: FinishReason,
}

impl CacheEntry {
    pub fn new(request: &ChatRequest, response: &ChatResponse) -> Self {
        CacheEntry {
            fingerprint: request.cache_key(),
            request: request.clone(),
            content: response.content.clone(),
            finish_reason: response.finish_reason,
        }
    }

    pub fn into_response(self, source: ResponseSource) -> ChatResponse {
        ChatResponse {
            content: self.content,
            finish_reason: self.finish_reason,
            source,
        }
    }
}

#[derive(Debug, Clone)]
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

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.path_for(key).is_file()
    }

    pub fn load(&self, key: &CacheKey) -> Result<Option<CacheEntry>, GatewayError> {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => {
                return Err(GatewayError::CacheRead {
                    path,
                    reason: e.to_string(),
                })
            }
        };
        let entry: CacheEntry = serde_json::from_slice(&bytes).map_err(|e| GatewayError::CacheRead {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if &entry.fingerprint != key {
            return Err(GatewayError::CacheRead {
                path,
                reason: format!("entry fingerprint {} does not match file name", entry.fingerprint),
            });
        }
        Ok(Some(entry))
    }

    /// Atomically writes the entry for `request`. Rewriting an identical
    /// entry leaves the existing file untouched.
    pub fn store(&self, request: &ChatRequest, response: &ChatResponse) -> Result<CacheKey, GatewayError> {
        let entry = CacheEntry::new(request, response);
        let key = entry.fingerprint.clone();
        let path = self.path_for(&key);
        let fail = |reason: String| GatewayError::CacheWrite {
            path: path.clone(),
            reason,
        };
        let mut bytes = serde_json::to_vec_pretty(&entry).map_err(|e| fail(e.to_string()))?;
        bytes.push(b'\n');

        if fs::read(&path).is_ok_and(|existing| existing == bytes) {
            return Ok(key);
        }
        fs::create_dir_all(&self.dir).map_err(|e| fail(e.to_string()))?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| fail(e.to_string()))?;
        tmp.write_all(&bytes).map_err(|e| fail(e.to_string()))?;
        tmp.as_file().sync_all().map_err(|e| fail(e.to_string()))?;
        tmp.persist(&path).map_err(|e| fail(e.error.to_string()))?;
        Ok(key)
    }
}
