//! Multimodal LLM access.
//!
//! A [`Gateway`] wraps one [`MllmBackend`] with request validation, retry
//! with exponential backoff, a requests-per-minute ceiling, and an optional
//! on-disk [`ResponseCache`]. Backends perform exactly one attempt per call.

mod cache;
mod clock;
mod live;
mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::{CachedResponse, ResponseCache};
pub(crate) use cache::write_atomic;
pub use clock::{Clock, RateLimiter, SystemClock, VirtualClock};
pub use live::{LiveBackend, API_KEY_ENV};
pub use mock::MockBackend;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePayload {
    pub mime: String,
    pub bytes: Vec<u8>,
}

impl ImagePayload {
    pub fn png(bytes: Vec<u8>) -> Self {
        Self {
            mime: "image/png".to_string(),
            bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MllmRequest {
    pub images: Vec<ImagePayload>,
    pub text: String,
    pub model_tag: String,
    pub max_output_tokens: u32,
    pub temperature: f64,
}

impl MllmRequest {
    pub fn validate(&self) -> Result<(), MllmError> {
        if self.images.is_empty() && self.text.is_empty() {
            return Err(MllmError::InvalidRequest(
                "request needs prompt text or at least one image".into(),
            ));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(MllmError::InvalidRequest(format!(
                "temperature must be a finite value >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    pub fn cache_key(&self) -> CacheKey {
        CacheKey::of(self)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MllmResponse {
    /// Verbatim backend output.
    pub text: String,
    pub model_tag: String,
    pub usage: Usage,
    pub latency: Duration,
    /// Backend attempts spent, 0 for cache hits.
    pub attempts: u32,
}

/// Hex SHA-256 over model tag, temperature, prompt text and image bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub digest: String,
}

impl CacheKey {
    pub fn of(req: &MllmRequest) -> Self {
        let mut h = Sha256::new();
        let mut field = |bytes: &[u8]| {
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        };
        field(b"mllm-request-v1");
        field(req.model_tag.as_bytes());
        field(&req.temperature.to_bits().to_le_bytes());
        field(req.text.as_bytes());
        field(&(req.images.len() as u64).to_le_bytes());
        for img in &req.images {
            field(&img.bytes);
        }
        Self {
            digest: hex::encode(h.finalize()),
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum MllmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication failed (HTTP {status}): {message}")]
    Auth { status: u16, message: String },
    #[error("rate limited by backend: {0}")]
    RateLimited(String),
    #[error("backend server error (HTTP {status}): {message}")]
    Server { status: u16, message: String },
    #[error("backend rejected request (HTTP {status}): {message}")]
    Http { status: u16, message: String },
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed backend reply: {0}")]
    Malformed(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: Box<MllmError> },
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("response cache: {0}")]
    Cache(String),
}

impl MllmError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            Self::RateLimited(_) | Self::Server { .. } | Self::Timeout(_) | Self::Transport(_)
        )
    }

    /// Maps an HTTP status onto the error taxonomy.
    pub fn from_status(status: u16, message: String) -> Self {
        match status {
            401 | 403 => Self::Auth { status, message },
            429 => Self::RateLimited(message),
            500..=599 => Self::Server { status, message },
            _ => Self::Http { status, message },
        }
    }
}

/// One attempt against a model service.
pub trait MllmBackend: Send + Sync {
    fn call(&self, req: &MllmRequest) -> Result<MllmResponse, MllmError>;
}

impl<B: MllmBackend + ?Sized> MllmBackend for Arc<B> {
    fn call(&self, req: &MllmRequest) -> Result<MllmResponse, MllmError> {
        (**self).call(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): base * 2^(retry-1), capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Backend settings shared by the live client and request construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub endpoint_url: String,
    pub model_tag: String,
    pub rpm_limit: u32,
    pub max_retries: u32,
    pub timeout_seconds: u64,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1/chat/completions".to_string(),
            model_tag: "gpt-4o".to_string(),
            rpm_limit: 60,
            max_retries: 4,
            timeout_seconds: 120,
            temperature: 0.0,
            max_output_tokens: 512,
        }
    }
}

impl GatewayConfig {
    pub fn request(&self, text: String, images: Vec<ImagePayload>) -> MllmRequest {
        MllmRequest {
            images,
            text,
            model_tag: self.model_tag.clone(),
            max_output_tokens: self.max_output_tokens,
            temperature: self.temperature,
        }
    }
}

pub struct Gateway {
    backend: Box<dyn MllmBackend>,
    config: GatewayConfig,
    retry: RetryPolicy,
    limiter: Option<RateLimiter>,
    clock: Arc<dyn Clock>,
    dispatches: AtomicUsize,
}

impl Gateway {
    pub fn new(backend: impl MllmBackend + 'static) -> Self {
        Self {
            backend: Box::new(backend),
            config: GatewayConfig::default(),
            retry: RetryPolicy::default(),
            limiter: None,
            clock: Arc::new(SystemClock::new()),
            dispatches: AtomicUsize::new(0),
        }
    }

    /// Applies request defaults plus the retry and rate-limit settings of
    /// `config`. Backoff timing is left unchanged.
    pub fn with_config(mut self, config: GatewayConfig) -> Self {
        self.retry.max_retries = config.max_retries;
        let rpm = config.rpm_limit;
        self.config = config;
        self.with_rpm_limit(rpm)
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// Request carrying this gateway's model tag and decoding settings.
    pub fn request(&self, text: String, images: Vec<ImagePayload>) -> MllmRequest {
        self.config.request(text, images)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Caps dispatches at `rpm` per sliding 60-second window; 0 disables.
    pub fn with_rpm_limit(mut self, rpm: u32) -> Self {
        self.limiter = (rpm > 0).then(|| RateLimiter::per_minute(rpm));
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// Number of attempts handed to the backend so far.
    pub fn dispatch_count(&self) -> usize {
        self.dispatches.load(Ordering::SeqCst)
    }

    pub fn complete(&self, req: &MllmRequest) -> Result<MllmResponse, MllmError> {
        req.validate()?;
        let mut attempt = 0;
        loop {
            attempt += 1;
            if let Some(limiter) = &self.limiter {
                limiter.acquire(self.clock.as_ref());
            }
            self.dispatches.fetch_add(1, Ordering::SeqCst);
            let started = self.clock.now();
            match self.backend.call(req) {
                Ok(mut resp) => {
                    resp.latency = self.clock.now().saturating_sub(started).max(resp.latency);
                    resp.attempts = attempt;
                    return Ok(resp);
                }
                Err(err) if err.is_retryable() && attempt <= self.retry.max_retries => {
                    let wait = self.retry.delay(attempt);
                    log::warn!("attempt {attempt} failed ({err}); retrying in {wait:?}");
                    self.clock.sleep(wait);
                }
                Err(err) if err.is_retryable() => {
                    return Err(MllmError::RetriesExhausted {
                        attempts: attempt,
                        last: Box::new(err),
                    })
                }
                Err(err) => return Err(err),
            }
        }
    }

    /// Serves from `cache` when possible; otherwise calls [`Gateway::complete`]
    /// and stores the reply.
    pub fn complete_cached(
        &self,
        req: &MllmRequest,
        cache: &ResponseCache,
    ) -> Result<CachedResponse, MllmError> {
        req.validate()?;
        let key = req.cache_key();
        if let Some(hit) = cache.lookup(&key) {
            return Ok(hit);
        }
        let response = self.complete(req)?;
        let stored_at = cache.store(&key, req, &response)?;
        Ok(CachedResponse {
            response,
            hit: false,
            stored_at,
        })
    }
}
