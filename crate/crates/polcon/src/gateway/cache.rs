//! Content-addressed on-disk response cache.
//!
//! One JSON record per key under `cache/<model_id>/<sha256-of-key>.json`,
//! holding the request, the response text, and a timestamp. Writes go
//! through a temp file and an atomic rename, so concurrent writers of the
//! same key serialize on the filesystem.

use super::ChatRequest;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone)]
pub struct DiskCache {
    root: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    request: ChatRequest,
    response_text: String,
    unix_timestamp: u64,
}

/// The cache key covers every field that affects a completion.
fn cache_key(request: &ChatRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update(request.model_id.as_bytes());
    hasher.update([0x1f]);
    if let Some(system) = &request.system_prompt {
        hasher.update(system.as_bytes());
    }
    hasher.update([0x1f, if request.system_prompt.is_some() { 1 } else { 0 }]);
    hasher.update(request.user_prompt.as_bytes());
    hasher.update([0x1f]);
    hasher.update(request.temperature.to_bits().to_le_bytes());
    hasher.update(request.max_tokens.to_le_bytes());
    hex(&hasher.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Model ids may contain path separators; keep them readable but safe.
fn sanitize_component(raw: &str) -> String {
    let cleaned: String = raw
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' || c == '_' { c } else { '_' })
        .collect();
    if cleaned == raw {
        cleaned
    } else {
        let mut hasher = Sha256::new();
        hasher.update(raw.as_bytes());
        format!("{}-{}", cleaned, &hex(&hasher.finalize())[..8])
    }
}

impl DiskCache {
    pub fn new(root: impl AsRef<Path>) -> Self {
        Self {
            root: root.as_ref().to_path_buf(),
        }
    }

    fn path_for(&self, request: &ChatRequest) -> PathBuf {
        self.root
            .join(sanitize_component(&request.model_id))
            .join(format!("{}.json", cache_key(request)))
    }

    pub fn get(&self, request: &ChatRequest) -> Result<Option<String>, String> {
        let path = self.path_for(request);
        match std::fs::read_to_string(&path) {
            Ok(body) => {
                let record: CacheRecord =
                    serde_json::from_str(&body).map_err(|e| format!("corrupt cache record {}: {e}", path.display()))?;
                Ok(Some(record.response_text))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(format!("cache read {}: {e}", path.display())),
        }
    }

    pub fn put(&self, request: &ChatRequest, response_text: &str) -> Result<(), String> {
        let path = self.path_for(request);
        let parent = path.parent().expect("cache paths have parents");
        std::fs::create_dir_all(parent).map_err(|e| format!("cache mkdir {}: {e}", parent.display()))?;
        let record = CacheRecord {
            request: request.clone(),
            response_text: response_text.to_string(),
            unix_timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        let body = serde_json::to_string(&record).map_err(|e| format!("cache encode: {e}"))?;
        let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
        std::fs::write(&tmp, body).map_err(|e| format!("cache write {}: {e}", tmp.display()))?;
        std::fs::rename(&tmp, &path).map_err(|e| format!("cache rename {}: {e}", path.display()))?;
        Ok(())
    }
}
