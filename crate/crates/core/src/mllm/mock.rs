use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Duration;

use super::{CacheKey, MllmBackend, MllmError, MllmRequest, MllmResponse, Usage};

/// Offline backend keyed by request digest.
///
/// Replies come from an in-memory fixture, then from `<fixtures_dir>/<digest>.txt`,
/// and otherwise from a fixed function of the digest, so every request has a
/// stable answer across processes.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    fixtures: HashMap<String, String>,
    fixtures_dir: Option<PathBuf>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fixtures_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.fixtures_dir = Some(dir.into());
        self
    }

    pub fn with_fixture(mut self, key: &CacheKey, text: impl Into<String>) -> Self {
        self.fixtures.insert(key.digest.clone(), text.into());
        self
    }

    fn answer(&self, key: &CacheKey) -> Result<String, MllmError> {
        if let Some(text) = self.fixtures.get(&key.digest) {
            return Ok(text.clone());
        }
        if let Some(dir) = &self.fixtures_dir {
            let path = dir.join(format!("{}.txt", key.digest));
            match std::fs::read_to_string(&path) {
                Ok(text) => return Ok(text),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => {
                    return Err(MllmError::Unavailable(format!("{}: {e}", path.display())))
                }
            }
        }
        Ok(format!("mock response {}", &key.digest[..16]))
    }
}

impl MllmBackend for MockBackend {
    fn call(&self, req: &MllmRequest) -> Result<MllmResponse, MllmError> {
        let text = self.answer(&req.cache_key())?;
        Ok(MllmResponse {
            usage: Usage {
                input_tokens: req.text.split_whitespace().count() as u64,
                output_tokens: text.split_whitespace().count() as u64,
            },
            text,
            model_tag: req.model_tag.clone(),
            latency: Duration::ZERO,
            attempts: 0,
        })
    }
}
