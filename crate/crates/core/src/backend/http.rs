//! HTTP client for an external multimodal inference server.
//!
//! Wire contract: `POST {endpoint}/v1/logits` with JSON
//! `{"prompt", "image_b64", "candidates"}`; the server answers
//! `{"logits": {word: number}, "model": string}`, where each logit is the
//! value of the first sub-token of `" " + word` at the position right
//! after the prompt. Raw logits and log-softmax values are both fine as
//! long as one response is internally consistent. 5xx and transport
//! errors are retried with jittered exponential backoff; 4xx is terminal.

use std::collections::BTreeMap;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BackendConfig, BackendError, LogitProvider, LogitQuery, MediaRef, WordLogitRecord};

#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    image_b64: String,
    candidates: &'a [String],
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    logits: BTreeMap<String, f64>,
    model: String,
}

pub struct HttpProvider {
    endpoint: String,
    auth_token: Option<String>,
    client: reqwest::blocking::Client,
    max_retries: u32,
    backoff_base: Duration,
}

impl HttpProvider {
    pub fn from_config(config: &BackendConfig) -> Result<Self, BackendError> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or(BackendError::MissingEndpoint)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| BackendError::InvalidQuery(format!("http client: {e}")))?;
        Ok(Self {
            endpoint,
            auth_token: config.auth_token.clone(),
            client,
            max_retries: config.max_retries,
            backoff_base: Duration::from_millis(config.backoff_base_ms),
        })
    }

    fn url(&self) -> String {
        format!("{}/v1/logits", self.endpoint.trim_end_matches('/'))
    }

    fn media_bytes(&self, query: &LogitQuery) -> Result<Vec<u8>, BackendError> {
        match &query.media {
            MediaRef::Inline(bytes) => Ok(bytes.clone()),
            MediaRef::Path(path) => {
                std::fs::read(path).map_err(|e| BackendError::MediaRead {
                    path: path.clone(),
                    reason: e.to_string(),
                })
            }
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.backoff_base.as_secs_f64() * f64::from(2u32.saturating_pow(attempt));
        let jitter = rand::rng().random_range(0.5..1.5);
        Duration::from_secs_f64(base * jitter)
    }

    fn parse_response(
        &self,
        query: &LogitQuery,
        response: WireResponse,
    ) -> Result<WordLogitRecord, BackendError> {
        let mut word_logits = BTreeMap::new();
        for word in &query.candidate_words {
            if let Some(value) = response.logits.get(word) {
                if !value.is_finite() {
                    return Err(BackendError::InvalidLogit {
                        word: word.clone(),
                        value: *value,
                    });
                }
                word_logits.insert(word.clone(), *value);
            }
        }
        Ok(WordLogitRecord {
            item_id: query.item_id.clone(),
            frame_index: query.frame_index,
            word_logits,
            provider_id: format!("http:{}", response.model),
            prompt_digest: query.prompt_digest(),
        })
    }
}

impl LogitProvider for HttpProvider {
    fn fetch_raw(&self, query: &LogitQuery) -> Result<WordLogitRecord, BackendError> {
        query.validate()?;
        let body = WireRequest {
            prompt: &query.prompt_text,
            image_b64: BASE64.encode(self.media_bytes(query)?),
            candidates: &query.candidate_words,
        };
        let url = self.url();
        let mut last_error = String::new();
        let attempts = self.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.backoff(attempt - 1);
                log::warn!(
                    "retrying {url} (attempt {}/{attempts}) after {last_error}",
                    attempt + 1
                );
                std::thread::sleep(delay);
            }
            let mut request = self.client.post(&url).json(&body);
            if let Some(token) = &self.auth_token {
                request = request.bearer_auth(token);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        let parsed: WireResponse = response.json().map_err(|e| {
                            BackendError::InvalidQuery(format!("malformed backend response: {e}"))
                        })?;
                        return self.parse_response(query, parsed);
                    }
                    let code = status.as_u16();
                    let text = response.text().unwrap_or_default();
                    if status.is_client_error() {
                        return Err(BackendError::RejectedRequest {
                            status: code,
                            body: text.chars().take(200).collect(),
                        });
                    }
                    last_error = format!("status {code}");
                }
                Err(e) => {
                    last_error = e.to_string();
                }
            }
        }
        Err(BackendError::Unreachable {
            attempts,
            last_error,
        })
    }

    fn id(&self) -> String {
        format!("http:{}", self.endpoint)
    }
}
