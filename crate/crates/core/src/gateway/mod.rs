//! Chat-completion gateway.
//!
//! Every model call in the crate goes through [`Gateway::complete`]. Three
//! backends sit behind it:
//!
//! - `live`: an OpenAI-compatible `POST <base_url>/chat/completions` endpoint,
//!   with retries, recording every response into the cache directory;
//! - `replay`: serves responses from a cache directory only, never touching
//!   the network;
//! - `mock`: a scripted rule file, for offline tests and fixtures.

mod cache;
mod live;
mod mock;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error::ErrorKind;

pub use cache::{CacheEntry, ResponseCache};
pub use live::LiveBackend;
pub use mock::{MockBackend, MockRule, MockScript};

/// Role a request plays in the loop. Used for logging, mock routing and
/// per-role model overrides. `Eval` marks calls made while scoring a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestTag {
    Actor,
    Critic,
    Update,
    Eval,
}

impl RequestTag {
    pub fn name(self) -> &'static str {
        match self {
            RequestTag::Actor => "actor",
            RequestTag::Critic => "critic",
            RequestTag::Update => "update",
            RequestTag::Eval => "eval",
        }
    }
}

impl fmt::Display for RequestTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MessageRole {
    System,
    #[default]
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: MessageRole,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub tag: RequestTag,
    /// Distinguishes repeated samples of an otherwise identical request.
    /// Part of the fingerprint only when nonzero; never sent on the wire.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub sample_index: u32,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

impl ChatRequest {
    /// A single-message request with default decoding settings.
    pub fn new(tag: RequestTag, model: impl Into<String>, content: impl Into<String>) -> Self {
        ChatRequest {
            model: model.into(),
            messages: vec![Message {
                role: MessageRole::User,
                content: content.into(),
            }],
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: 512,
            tag,
            sample_index: 0,
        }
    }

    /// All message contents joined with newlines; what mock rules match on.
    pub fn content(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn cache_key(&self) -> CacheKey {
        CacheKey::of(self)
    }

    fn canonical(&self) -> CanonicalRequest<'_> {
        CanonicalRequest {
            model: &self.model,
            messages: &self.messages,
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens: self.max_tokens,
            sample_index: self.sample_index,
        }
    }
}

/// Field order here is the canonical serialization order.
#[derive(Serialize)]
struct CanonicalRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "is_zero")]
    sample_index: u32,
}

/// SHA-256 over the canonical JSON of the fingerprinted request fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn of(request: &ChatRequest) -> Self {
        let canonical = serde_json::to_vec(&request.canonical()).expect("request serializes");
        CacheKey(hex::encode(Sha256::digest(&canonical)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseSource {
    Live,
    Cache,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    pub source: ResponseSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Live,
    Replay,
    #[default]
    Mock,
}

impl std::str::FromStr for BackendKind {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, GatewayError> {
        match s {
            "live" => Ok(BackendKind::Live),
            "replay" => Ok(BackendKind::Replay),
            "mock" => Ok(BackendKind::Mock),
            other => Err(GatewayError::Config(format!("unknown backend {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            backoff_base_ms: 500,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, for `attempt` starting at 1.
    pub fn backoff(&self, attempt: u32) -> std::time::Duration {
        let factor = 1u64 << (attempt.saturating_sub(1)).min(16);
        std::time::Duration::from_millis(self.backoff_base_ms.saturating_mul(factor))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub cache_dir: Option<PathBuf>,
    pub mock_script: Option<PathBuf>,
    pub retry: RetryPolicy,
    pub timeout_secs: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            base_url: None,
            api_key_env: "PACE_API_KEY".to_owned(),
            cache_dir: None,
            mock_script: None,
            retry: RetryPolicy::default(),
            timeout_secs: 60,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.kind {
            BackendKind::Live if self.base_url.as_deref().map_or(true, str::is_empty) => {
                Err(GatewayError::Config("live backend requires base_url".into()))
            }
            BackendKind::Replay if self.cache_dir.is_none() => {
                Err(GatewayError::Config("replay backend requires cache_dir".into()))
            }
            BackendKind::Mock if self.mock_script.is_none() => {
                Err(GatewayError::Config("mock backend requires mock_script".into()))
            }
            _ if self.retry.max_attempts == 0 => {
                Err(GatewayError::Config("retry.max_attempts must be ≥ 1".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },

    #[error("rejected request: HTTP {status}: {body}")]
    Rejected { status: u16, body: String },

    #[error("malformed response: {0}")]
    Malformed(String),

    #[error("cache miss: {0}")]
    CacheMiss(CacheKey),

    #[error("cache write failed: {path}: {reason}")]
    CacheWrite { path: PathBuf, reason: String },

    #[error("cache read failed: {path}: {reason}")]
    CacheRead { path: PathBuf, reason: String },

    #[error("mock unmatched request ({tag}): {excerpt}")]
    MockUnmatched { tag: RequestTag, excerpt: String },

    #[error("invalid mock script: {0}")]
    MockScript(String),

    #[error("API key environment variable {0} is not set")]
    MissingApiKey(String),

    #[error("backend misconfigured: {0}")]
    Config(String),
}

impl GatewayError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            GatewayError::MissingApiKey(_) | GatewayError::Config(_) | GatewayError::MockScript(_) => {
                ErrorKind::Config
            }
            _ => ErrorKind::Backend,
        }
    }
}

/// A source of chat completions.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(request)
    }
}

/// Replay-only backend over a cache directory.
pub struct ReplayBackend {
    cache: ResponseCache,
}

impl ReplayBackend {
    pub fn new(cache: ResponseCache) -> Self {
        ReplayBackend { cache }
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let key = request.cache_key();
        match self.cache.load(&key)? {
            Some(entry) => Ok(entry.into_response(ResponseSource::Cache)),
            None => Err(GatewayError::CacheMiss(key)),
        }
    }
}

/// The model interface used by the optimizer, scorer and harness.
pub struct Gateway {
    kind: BackendKind,
    backend: Box<dyn ChatBackend>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway").field("kind", &self.kind).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        Self::from_config_with_key(config, None)
    }

    /// Like [`Gateway::from_config`], with an explicit API key taking
    /// precedence over the configured environment variable.
    pub fn from_config_with_key(config: &BackendConfig, api_key: Option<String>) -> Result<Self, GatewayError> {
        config.validate()?;
        let backend: Box<dyn ChatBackend> = match config.kind {
            BackendKind::Live => {
                let key = match api_key {
                    Some(k) => k,
                    None => std::env::var(&config.api_key_env)
                        .ok()
                        .filter(|k| !k.is_empty())
                        .ok_or_else(|| GatewayError::MissingApiKey(config.api_key_env.clone()))?,
                };
                let cache = config.cache_dir.clone().map(ResponseCache::new);
                Box::new(LiveBackend::new(
                    config.base_url.clone().unwrap_or_default(),
                    key,
                    cache,
                    config.retry.clone(),
                    std::time::Duration::from_secs(config.timeout_secs.max(1)),
                )?)
            }
            BackendKind::Replay => {
                let dir = config.cache_dir.clone().unwrap_or_default();
                Box::new(ReplayBackend::new(ResponseCache::new(dir)))
            }
            BackendKind::Mock => {
                let path = config.mock_script.clone().unwrap_or_default();
                Box::new(MockBackend::new(MockScript::load(&path)?))
            }
        };
        Ok(Gateway {
            kind: config.kind,
            backend,
        })
    }

    pub fn from_backend(kind: BackendKind, backend: impl ChatBackend + 'static) -> Self {
        Gateway {
            kind,
            backend: Box::new(backend),
        }
    }

    pub fn mock(script: MockScript) -> Self {
        Self::from_backend(BackendKind::Mock, MockBackend::new(script))
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        if request.messages.is_empty() {
            return Err(GatewayError::Config("request has no messages".into()));
        }
        log::debug!("{} request {}", request.tag, request.cache_key());
        self.backend.complete(request)
    }
}

/// Counts calls by tag; useful when checking fan-out and ablation behavior.
#[derive(Default)]
pub struct CallCounter {
    counts: std::sync::Mutex<BTreeMap<RequestTag, usize>>,
}

impl CallCounter {
    pub fn record(&self, tag: RequestTag) {
        *self.counts.lock().expect("counter lock").entry(tag).or_default() += 1;
    }

    pub fn snapshot(&self) -> BTreeMap<RequestTag, usize> {
        self.counts.lock().expect("counter lock").clone()
    }
}

/// Wraps a backend and counts the calls passing through it.
pub struct Counting<B> {
    inner: B,
    counter: std::sync::Arc<CallCounter>,
}

impl<B> Counting<B> {
    pub fn new(inner: B) -> (Self, std::sync::Arc<CallCounter>) {
        let counter = std::sync::Arc::new(CallCounter::default());
        (
            Counting {
                inner,
                counter: counter.clone(),
            },
            counter,
        )
    }
}

impl<B: ChatBackend> ChatBackend for Counting<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.counter.record(request.tag);
        self.inner.complete(request)
    }
}
