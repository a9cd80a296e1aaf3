//! Human-readable on-disk response cache.
//!
//! Layout: `<root>/<first two digest hex chars>/<digest>/` holding
//! `request.json` (request metadata) and `response.txt` (verbatim reply).
//! Editing `response.txt` by hand changes what later hits return.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CacheKey, MllmError, MllmRequest, MllmResponse, Usage};

const REQUEST_FILE: &str = "request.json";
const RESPONSE_FILE: &str = "response.txt";

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone, PartialEq)]
pub struct CachedResponse {
    pub response: MllmResponse,
    pub hit: bool,
    /// RFC 3339 time the entry was first written.
    pub stored_at: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ImageMeta {
    mime: String,
    bytes: usize,
    sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RequestRecord {
    digest: String,
    model_tag: String,
    temperature: f64,
    max_output_tokens: u32,
    text: String,
    images: Vec<ImageMeta>,
    usage: Usage,
    stored_at: String,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_dir(&self, key: &CacheKey) -> PathBuf {
        self.root.join(&key.digest[..2]).join(&key.digest)
    }

    /// Returns the stored reply, or `None` on a miss. Unreadable or
    /// inconsistent entries are logged and treated as misses.
    pub fn lookup(&self, key: &CacheKey) -> Option<CachedResponse> {
        let dir = self.entry_dir(key);
        if !dir.exists() {
            return None;
        }
        match Self::read_entry(&dir, key) {
            Ok(hit) => Some(hit),
            Err(reason) => {
                log::warn!("corrupt cache entry {}: {reason}; treating as miss", dir.display());
                None
            }
        }
    }

    fn read_entry(dir: &Path, key: &CacheKey) -> Result<CachedResponse, String> {
        let meta = std::fs::read(dir.join(REQUEST_FILE)).map_err(|e| e.to_string())?;
        let meta: RequestRecord = serde_json::from_slice(&meta).map_err(|e| e.to_string())?;
        if meta.digest != key.digest {
            return Err(format!("recorded digest {} does not match", meta.digest));
        }
        let text = std::fs::read(dir.join(RESPONSE_FILE)).map_err(|e| e.to_string())?;
        let text = String::from_utf8(text).map_err(|e| e.to_string())?;
        Ok(CachedResponse {
            response: MllmResponse {
                text,
                model_tag: meta.model_tag,
                usage: meta.usage,
                latency: Duration::ZERO,
                attempts: 0,
            },
            hit: true,
            stored_at: meta.stored_at,
        })
    }

    /// Writes both files atomically (temp file then rename); returns the
    /// stored-at timestamp.
    pub fn store(
        &self,
        key: &CacheKey,
        req: &MllmRequest,
        resp: &MllmResponse,
    ) -> Result<String, MllmError> {
        let dir = self.entry_dir(key);
        let err = |e: std::io::Error| MllmError::Cache(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(&dir).map_err(err)?;
        let stored_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        let record = RequestRecord {
            digest: key.digest.clone(),
            model_tag: req.model_tag.clone(),
            temperature: req.temperature,
            max_output_tokens: req.max_output_tokens,
            text: req.text.clone(),
            images: req
                .images
                .iter()
                .map(|img| ImageMeta {
                    mime: img.mime.clone(),
                    bytes: img.bytes.len(),
                    sha256: hex::encode(Sha256::digest(&img.bytes)),
                })
                .collect(),
            usage: resp.usage,
            stored_at: stored_at.clone(),
        };
        let json = serde_json::to_vec_pretty(&record).expect("record serializes");
        write_atomic(&dir, REQUEST_FILE, &json).map_err(err)?;
        write_atomic(&dir, RESPONSE_FILE, resp.text.as_bytes()).map_err(err)?;
        Ok(stored_at)
    }
}

pub(crate) fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = dir.join(format!(
        ".{name}.tmp-{}-{}",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, dir.join(name))
}
