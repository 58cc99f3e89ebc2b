//! Chat-completion abstraction shared by every agent.
//!
//! Three implementations sit behind [`ChatBackend`]:
//!
//! - [`MockBackend`], a pure function of the prompts and variant seed;
//! - [`ReplayBackend`] / [`RecordingBackend`], backed by an append-only
//!   [`Cassette`] keyed by request [`fingerprint`];
//! - [`LiveBackend`], an OpenAI-compatible HTTP client with retry and
//!   throttling.
//!
//! Malformed model output is not an error here; callers validate it.

mod cassette;
mod live;
mod mock;

pub use cassette::{Cassette, CassetteEntry, RecordingBackend, ReplayBackend};
pub use live::{LiveBackend, LiveConfig, Throttle};
pub use mock::MockBackend;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseFormat {
    FreeText,
    StructuredObject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    #[serde(default)]
    pub image_refs: Vec<String>,
    pub response_format: ResponseFormat,
    /// Distinguishes independent generations of the same prompt.
    #[serde(default)]
    pub variant_seed: u32,
}

impl ChatRequest {
    pub fn new(system: impl Into<String>, user: impl Into<String>, format: ResponseFormat) -> Self {
        ChatRequest {
            system_prompt: system.into(),
            user_prompt: user.into(),
            image_refs: Vec::new(),
            response_format: format,
            variant_seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u32) -> Self {
        self.variant_seed = seed;
        self
    }

    pub fn with_images(mut self, refs: Vec<String>) -> Self {
        self.image_refs = refs;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("prompts must be nonempty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub latency_ms: u64,
    pub backend_id: String,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failed after {attempts} attempts: {last}")]
    TransportExhausted { attempts: u32, last: String },

    #[error("authentication failed: {0}")]
    Authentication(String),

    #[error("cassette has no response for request {fingerprint}")]
    ReplayMiss { fingerprint: String },

    #[error("upstream returned HTTP {status}: {body}")]
    Http { status: u16, body: String },

    #[error("malformed completion envelope: {0}")]
    Envelope(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("backend configuration: {0}")]
    Config(String),

    #[error("cassette {path}: {detail}")]
    Cassette { path: String, detail: String },
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError>;

    fn backend_id(&self) -> &str;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(req)
    }

    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(req)
    }

    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }
}

#[derive(Serialize)]
struct Canonical<'a> {
    system_prompt: &'a str,
    user_prompt: &'a str,
    image_refs: Vec<&'a str>,
    response_format: ResponseFormat,
    variant_seed: u32,
}

/// Hex SHA-256 over the request content. Image reference order is ignored.
pub fn fingerprint(req: &ChatRequest) -> String {
    let mut image_refs: Vec<&str> = req.image_refs.iter().map(String::as_str).collect();
    image_refs.sort_unstable();
    let canonical = Canonical {
        system_prompt: &req.system_prompt,
        user_prompt: &req.user_prompt,
        image_refs,
        response_format: req.response_format,
        variant_seed: req.variant_seed,
    };
    let bytes = serde_json::to_vec(&canonical).expect("canonical request serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Wraps a backend and counts completed calls (successful or not).
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B: ChatBackend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) -> usize {
        self.calls.swap(0, Ordering::SeqCst)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ChatBackend> ChatBackend for CountingBackend<B> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(req)
    }

    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }
}
