//! OpenAI-compatible chat completions client.
//!
//! POSTs `{endpoint}/chat/completions`, retries transport errors, 429s, and
//! 5xx responses with full-jitter exponential backoff, and caps in-flight
//! requests at `max_concurrency`. Image parts are sent as base64 data URIs
//! read from the frame's `uri` at send time.

use std::fs;
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    estimate_request_tokens, estimate_tokens_with, BackendError, ChatBackend, ChatRequest,
    Completion, ContentPart, Role, Usage, DEFAULT_IMAGE_TOKENS, DEFAULT_MAX_OUTPUT_TOKENS,
    DEFAULT_TEMPERATURE,
};
use crate::backend::GenParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key. `None` sends
    /// no Authorization header (local serving stacks).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_base_s")]
    pub backoff_base_s: f64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "default_max_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_image_tokens")]
    pub image_token_constant: u64,
    /// Advisory pixel cap per frame for the serving side. Recorded for run
    /// metadata only; images are sent as-is, never resized here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_image_pixels: Option<u64>,
}

fn default_max_retries() -> u32 {
    3
}
fn default_backoff_base_s() -> f64 {
    0.5
}
fn default_timeout_s() -> f64 {
    120.0
}
fn default_max_concurrency() -> usize {
    4
}
fn default_max_output_tokens() -> u32 {
    DEFAULT_MAX_OUTPUT_TOKENS
}
fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}
fn default_image_tokens() -> u64 {
    DEFAULT_IMAGE_TOKENS
}

impl BackendConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        BackendConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: None,
            max_retries: default_max_retries(),
            backoff_base_s: default_backoff_base_s(),
            timeout_s: default_timeout_s(),
            max_concurrency: default_max_concurrency(),
            max_output_tokens: default_max_output_tokens(),
            temperature: default_temperature(),
            image_token_constant: default_image_tokens(),
            max_image_pixels: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_concurrency < 1 {
            return Err(BackendError::InvalidRequest(
                "max_concurrency must be at least 1".to_string(),
            ));
        }
        Ok(())
    }

    pub fn gen_params(&self) -> GenParams {
        GenParams {
            max_output_tokens: self.max_output_tokens,
            temperature: self.temperature,
        }
    }
}

/// Counting semaphore bounding in-flight requests.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore { permits: Mutex::new(permits), available: Condvar::new() }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore lock");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("semaphore lock");
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().expect("semaphore lock");
        *permits += 1;
        self.semaphore.available.notify_one();
    }
}

pub struct HttpBackend {
    config: BackendConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    limiter: Semaphore,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let api_key = match &config.api_key_env {
            Some(var) if !var.is_empty() => Some(
                std::env::var(var).map_err(|_| BackendError::MissingApiKey(var.clone()))?,
            ),
            _ => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s))
            .build()
            .map_err(|e| BackendError::InvalidRequest(format!("http client: {e}")))?;
        let limiter = Semaphore::new(config.max_concurrency);
        Ok(HttpBackend { config, api_key, client, limiter })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }

    fn wire_body(&self, req: &ChatRequest) -> Result<serde_json::Value, BackendError> {
        let mut messages = Vec::with_capacity(req.messages.len() + 1);
        if let Some(system) = &req.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        for message in &req.messages {
            // User messages carry content-part arrays (text and image
            // parts); assistant messages are plain strings, which every
            // serving stack accepts.
            let content = match message.role {
                Role::User => {
                    let mut parts = Vec::with_capacity(message.parts.len());
                    for part in &message.parts {
                        match part {
                            ContentPart::Text { text } => {
                                parts.push(json!({"type": "text", "text": text}))
                            }
                            ContentPart::Image { frame } => {
                                parts.push(json!({
                                    "type": "image_url",
                                    "image_url": {"url": image_data_uri(&frame.uri)?}
                                }))
                            }
                        }
                    }
                    serde_json::Value::Array(parts)
                }
                Role::Assistant => serde_json::Value::String(message.joined_text()),
            };
            let role = match message.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            messages.push(json!({"role": role, "content": content}));
        }
        Ok(json!({
            "model": self.config.model,
            "messages": messages,
            "max_tokens": req.max_output_tokens,
            "temperature": req.temperature,
        }))
    }

    fn parse_response(
        &self,
        req: &ChatRequest,
        body: &str,
    ) -> Result<Completion, String> {
        let value: serde_json::Value =
            serde_json::from_str(body).map_err(|e| format!("response parse: {e}"))?;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .ok_or("response missing choices[0].message.content")?
            .to_string();
        let usage = match value.get("usage") {
            Some(usage) => {
                let input = usage.get("prompt_tokens").and_then(|v| v.as_u64()).unwrap_or(0);
                let output =
                    usage.get("completion_tokens").and_then(|v| v.as_u64()).unwrap_or(0);
                let cached = usage
                    .pointer("/prompt_tokens_details/cached_tokens")
                    .and_then(|v| v.as_u64())
                    .unwrap_or(0);
                Usage::clamped(input, output, cached)
            }
            None => Usage {
                input_tokens: estimate_request_tokens(req, self.config.image_token_constant),
                output_tokens: estimate_tokens_with(
                    &[ContentPart::text(text.clone())],
                    self.config.image_token_constant,
                ),
                cached_input_tokens: 0,
            },
        };
        Ok(Completion { text, usage })
    }
}

enum AttemptOutcome {
    Done(Completion),
    Retry { reason: String, timed_out: bool },
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<Completion, BackendError> {
        req.validate()?;
        let _permit = self.limiter.acquire();
        let body = self.wire_body(req)?;
        let url = self.url();

        let mut last_reason = String::new();
        let mut last_timed_out = false;
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(backoff_delay(self.config.backoff_base_s, attempt - 1));
            }
            let mut builder = self.client.post(&url).json(&body);
            if let Some(key) = &self.api_key {
                builder = builder.bearer_auth(key);
            }
            let outcome = match builder.send() {
                Ok(response) => {
                    let status = response.status().as_u16();
                    let text = response.text().unwrap_or_default();
                    if (200..300).contains(&status) {
                        match self.parse_response(req, &text) {
                            Ok(completion) => AttemptOutcome::Done(completion),
                            Err(reason) => AttemptOutcome::Retry { reason, timed_out: false },
                        }
                    } else if status == 429 || (500..600).contains(&status) {
                        AttemptOutcome::Retry {
                            reason: format!("HTTP {status}: {}", truncate(&text, 200)),
                            timed_out: false,
                        }
                    } else {
                        return Err(BackendError::Terminal { status, body: text });
                    }
                }
                Err(e) => AttemptOutcome::Retry { reason: e.to_string(), timed_out: e.is_timeout() },
            };
            match outcome {
                AttemptOutcome::Done(completion) => return Ok(completion),
                AttemptOutcome::Retry { reason, timed_out } => {
                    log::warn!("attempt {} against {url} failed: {reason}", attempt + 1);
                    last_reason = reason;
                    last_timed_out = timed_out;
                }
            }
        }
        if last_timed_out {
            Err(BackendError::Timeout)
        } else {
            Err(BackendError::RetriesExhausted(last_reason))
        }
    }
}

/// Full-jitter exponential backoff: uniform in `[0, base * 2^attempt)`.
fn backoff_delay(base_s: f64, attempt: u32) -> Duration {
    let cap = base_s.max(0.0) * 2f64.powi(attempt as i32);
    let jittered = rand::thread_rng().gen_range(0.0..=1.0) * cap;
    Duration::from_secs_f64(jittered.min(60.0))
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}

fn image_data_uri(uri: &str) -> Result<String, BackendError> {
    use base64::Engine;
    let bytes = fs::read(uri)
        .map_err(|e| BackendError::InvalidRequest(format!("read image {uri}: {e}")))?;
    let mime = match Path::new(uri).extension().and_then(|e| e.to_str()) {
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        _ => "image/jpeg",
    };
    let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(format!("data:{mime};base64,{encoded}"))
}
