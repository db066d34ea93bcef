//! Pluggable logit providers and their shared types.
//!
//! A provider answers one question: given a prompt and an image (or video
//! frame), what logit does the model assign each candidate word at the
//! score-token position? Three providers are shipped: a deterministic
//! [`stub`], a JSONL record/replay [`cache`], and an [`http`] client for an
//! external inference server. Scoring depends only on the returned
//! [`WordLogitRecord`]s, never on the provider kind.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub mod cache;
pub mod http;
pub mod stub;

pub use cache::{load_cache, record_logits, ReplayProvider};
pub use http::HttpProvider;
pub use stub::{latent_quality, latent_tone_logits, stub_logits, StubProvider};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unreachable after {attempts} attempt(s): {last_error}")]
    Unreachable { attempts: u32, last_error: String },
    #[error("backend rejected request (status {status}): {body}")]
    RejectedRequest { status: u16, body: String },
    #[error("incomplete backend response: missing word {word:?} for item {item:?} frame {frame}")]
    IncompleteResponse {
        word: String,
        item: String,
        frame: u32,
    },
    #[error("invalid backend logit for word {word:?}: {value}")]
    InvalidLogit { word: String, value: f64 },
    #[error("cache miss: item {item:?} frame {frame} prompt_sha256 {digest}")]
    CacheMiss {
        item: String,
        frame: u32,
        digest: String,
    },
    #[error("cache read failed at {path}: {reason}")]
    CacheRead { path: PathBuf, reason: String },
    #[error("cache write failed at {path}: {reason}")]
    CacheWrite { path: PathBuf, reason: String },
    #[error("http backend requires an endpoint")]
    MissingEndpoint,
    #[error("replay backend requires a cache path")]
    MissingCachePath,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("cannot read media {path}: {reason}")]
    MediaRead { path: PathBuf, reason: String },
}

/// Image bytes for a query: a file on disk or an in-memory payload.
#[derive(Debug, Clone)]
pub enum MediaRef {
    Path(PathBuf),
    Inline(Vec<u8>),
}

/// One logit request: a prompt, one frame of one item, and the candidate
/// words to read at the next-token position.
#[derive(Debug, Clone)]
pub struct LogitQuery {
    pub item_id: String,
    pub frame_index: u32,
    pub media: MediaRef,
    pub prompt_text: String,
    pub candidate_words: Vec<String>,
}

impl LogitQuery {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.candidate_words.is_empty() {
            return Err(BackendError::InvalidQuery("no candidate words".into()));
        }
        let mut seen = Vec::new();
        for w in &self.candidate_words {
            if seen.contains(&w.as_str()) {
                return Err(BackendError::InvalidQuery(format!(
                    "duplicate candidate word {w:?}"
                )));
            }
            seen.push(w);
        }
        Ok(())
    }

    /// Content hash of the prompt text plus the candidate list.
    pub fn prompt_digest(&self) -> String {
        prompt_digest(&self.prompt_text, &self.candidate_words)
    }
}

/// 64-hex-char SHA-256 over the prompt text and candidate words.
pub fn prompt_digest<S: AsRef<str>>(prompt_text: &str, candidates: &[S]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt_text.as_bytes());
    hasher.update([0u8]);
    for word in candidates {
        hasher.update(word.as_ref().as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Per-word logits observed at the score-token position for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WordLogitRecord {
    pub item_id: String,
    pub frame_index: u32,
    pub word_logits: BTreeMap<String, f64>,
    pub provider_id: String,
    pub prompt_digest: String,
}

impl WordLogitRecord {
    /// Errors unless every requested word is present with a finite value.
    pub fn check_complete<S: AsRef<str>>(&self, candidates: &[S]) -> Result<(), BackendError> {
        for word in candidates {
            let word = word.as_ref();
            match self.word_logits.get(word) {
                None => {
                    return Err(BackendError::IncompleteResponse {
                        word: word.to_string(),
                        item: self.item_id.clone(),
                        frame: self.frame_index,
                    })
                }
                Some(v) if !v.is_finite() => {
                    return Err(BackendError::InvalidLogit {
                        word: word.to_string(),
                        value: *v,
                    })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// Which provider a run talks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Stub,
    Replay,
    Http,
}

impl std::str::FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stub" => Ok(BackendKind::Stub),
            "replay" => Ok(BackendKind::Replay),
            "http" => Ok(BackendKind::Http),
            other => Err(format!(
                "unknown backend {other:?} (expected stub, replay or http)"
            )),
        }
    }
}

fn default_timeout_secs() -> f64 {
    60.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_in_flight() -> usize {
    4
}
fn default_backoff_base_ms() -> u64 {
    500
}
fn default_stub_range() -> (f64, f64) {
    (0.0, 12.0)
}

/// Deterministic stub knobs; see [`stub::StubProvider`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubOptions {
    pub seed: u64,
    /// Derive logits monotonically from a per-item latent quality instead
    /// of hashing each word independently.
    pub latent: bool,
    /// Magnitude of deterministic additive noise on each word logit.
    pub noise: f64,
    /// Range hash-mode logits are mapped into.
    pub range: (f64, f64),
}

impl Default for StubOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            latent: false,
            noise: 0.0,
            range: default_stub_range(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub auth_token: Option<String>,
    #[serde(rename = "timeout_secs")]
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub cache_path: Option<PathBuf>,
    pub backoff_base_ms: u64,
    pub stub: StubOptions,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Stub,
            endpoint: None,
            auth_token: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            max_in_flight: default_max_in_flight(),
            cache_path: None,
            backoff_base_ms: default_backoff_base_ms(),
            stub: StubOptions::default(),
        }
    }
}

impl BackendConfig {
    /// Applies `QBOOST_HTTP_ENDPOINT` / `QBOOST_HTTP_TOKEN` overrides.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(endpoint) = std::env::var("QBOOST_HTTP_ENDPOINT") {
            if !endpoint.is_empty() {
                self.endpoint = Some(endpoint);
            }
        }
        if let Ok(token) = std::env::var("QBOOST_HTTP_TOKEN") {
            if !token.is_empty() {
                self.auth_token = Some(token);
            }
        }
        self
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.0))
    }
}

/// A source of word logits. Providers must be usable from several threads
/// at once; `max_in_flight` bounds the callers, not the provider.
pub trait LogitProvider: Send + Sync {
    /// Fetches whatever logits the provider has for the requested
    /// candidates. Completeness is checked separately so that callers
    /// scoring several modes from one superset fetch can tolerate gaps.
    fn fetch_raw(&self, query: &LogitQuery) -> Result<WordLogitRecord, BackendError>;

    fn id(&self) -> String;
}

/// Builds the provider a config names. The stub needs the word-to-tone map
/// for its latent mode, so the active prompt set is passed along.
pub fn make_provider(
    config: &BackendConfig,
    prompts: &crate::prompts::TonePromptSet,
) -> Result<Box<dyn LogitProvider>, BackendError> {
    match config.kind {
        BackendKind::Stub => Ok(Box::new(StubProvider::from_config(&config.stub, prompts))),
        BackendKind::Replay => {
            let path = config
                .cache_path
                .as_ref()
                .ok_or(BackendError::MissingCachePath)?;
            Ok(Box::new(ReplayProvider::load(path)?))
        }
        BackendKind::Http => Ok(Box::new(HttpProvider::from_config(config)?)),
    }
}

/// One-shot strict fetch: dispatches on the config, then insists every
/// candidate word came back finite.
pub fn fetch_logits(
    query: &LogitQuery,
    config: &BackendConfig,
    prompts: &crate::prompts::TonePromptSet,
) -> Result<WordLogitRecord, BackendError> {
    let provider = make_provider(config, prompts)?;
    fetch_checked(provider.as_ref(), query)
}

/// Strict fetch through an existing provider.
pub fn fetch_checked(
    provider: &dyn LogitProvider,
    query: &LogitQuery,
) -> Result<WordLogitRecord, BackendError> {
    query.validate()?;
    let record = provider.fetch_raw(query)?;
    record.check_complete(&query.candidate_words)?;
    Ok(record)
}
