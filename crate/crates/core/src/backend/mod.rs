//! Chat-completion backend abstraction.
//!
//! One message model serves both implementations: [`HttpBackend`] speaks the
//! OpenAI-compatible wire format to a live endpoint, and [`ScriptedBackend`]
//! replays canned responses so whole pipelines can run deterministically
//! offline.

mod http;
mod scripted;

pub use http::{BackendConfig, HttpBackend};
pub use scripted::ScriptedBackend;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::FrameRef;

/// Message author on the wire. Teacher turns map to `User`, Solver turns to
/// `Assistant`, and the mapping round-trips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

/// One piece of message content: text, or a reference to a frame image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ContentPart {
    Text { text: String },
    Image { frame: FrameRef },
}

impl ContentPart {
    pub fn text(s: impl Into<String>) -> Self {
        ContentPart::Text { text: s.into() }
    }

    pub fn image(frame: FrameRef) -> Self {
        ContentPart::Image { frame }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            ContentPart::Text { text } => Some(text),
            ContentPart::Image { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn user(parts: Vec<ContentPart>) -> Self {
        ChatMessage { role: Role::User, parts }
    }

    pub fn assistant(parts: Vec<ContentPart>) -> Self {
        ChatMessage { role: Role::Assistant, parts }
    }

    /// All text content of the message, image parts skipped.
    pub fn joined_text(&self) -> String {
        self.parts.iter().filter_map(|p| p.as_text()).collect::<Vec<_>>().join("")
    }
}

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 512;
pub const DEFAULT_TEMPERATURE: f64 = 0.0;

/// Decoding parameters applied to constructed requests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub max_output_tokens: u32,
    pub temperature: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

/// A complete chat request: optional system prompt plus alternating
/// user/assistant messages ending on a user message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub messages: Vec<ChatMessage>,
    pub max_output_tokens: u32,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(system: Option<String>, messages: Vec<ChatMessage>, gen: GenParams) -> Self {
        ChatRequest {
            system,
            messages,
            max_output_tokens: gen.max_output_tokens,
            temperature: gen.temperature,
        }
    }

    /// Structural checks every backend runs before dispatch: nonempty,
    /// strictly alternating roles, final message from the user.
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::InvalidRequest("no messages".to_string()));
        }
        for pair in self.messages.windows(2) {
            if pair[0].role == pair[1].role {
                return Err(BackendError::InvalidRequest(format!(
                    "consecutive {:?} messages",
                    pair[0].role
                )));
            }
        }
        if self.messages.last().map(|m| m.role) != Some(Role::User) {
            return Err(BackendError::InvalidRequest(
                "final message must be from the user".to_string(),
            ));
        }
        if self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Token usage attached to a completion. `cached_input_tokens` never
/// exceeds `input_tokens`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cached_input_tokens: u64,
}

impl Usage {
    /// Construct with the cached count clamped to the input count.
    pub fn clamped(input_tokens: u64, output_tokens: u64, cached_input_tokens: u64) -> Self {
        Usage {
            input_tokens,
            output_tokens,
            cached_input_tokens: cached_input_tokens.min(input_tokens),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("terminal HTTP status {status}: {body}")]
    Terminal { status: u16, body: String },
    #[error("retries exhausted: {0}")]
    RetriesExhausted(String),
    #[error("request timed out")]
    Timeout,
    #[error("script exhausted after {0} responses")]
    ScriptExhausted(usize),
    #[error("no scripted response for fingerprint {0}")]
    UnmatchedKey(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("api key environment variable '{0}' is not set")]
    MissingApiKey(String),
    #[error("script file {path}: {reason}")]
    ScriptFile { path: String, reason: String },
}

/// Uniform completion interface. Implementations are thread-safe and bound
/// their own in-flight concurrency.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<Completion, BackendError>;
}

/// Default charge for one image part in the token estimate heuristic.
pub const DEFAULT_IMAGE_TOKENS: u64 = 256;

/// Deterministic token estimate for a list of content parts:
/// `ceil(total_text_chars / 4) + image_tokens * #images`.
pub fn estimate_tokens_with(parts: &[ContentPart], image_tokens: u64) -> u64 {
    let mut chars: u64 = 0;
    let mut images: u64 = 0;
    for part in parts {
        match part {
            ContentPart::Text { text } => chars += text.chars().count() as u64,
            ContentPart::Image { .. } => images += 1,
        }
    }
    chars.div_ceil(4) + image_tokens * images
}

/// [`estimate_tokens_with`] at the default image charge.
pub fn estimate_tokens(parts: &[ContentPart]) -> u64 {
    estimate_tokens_with(parts, DEFAULT_IMAGE_TOKENS)
}

/// Token estimate for a whole request: the system prompt plus every
/// message's parts.
pub fn estimate_request_tokens(req: &ChatRequest, image_tokens: u64) -> u64 {
    let system_chars = req.system.as_deref().map(|s| s.chars().count() as u64).unwrap_or(0);
    let body: u64 = req
        .messages
        .iter()
        .map(|m| estimate_tokens_with(&m.parts, image_tokens))
        .sum();
    system_chars.div_ceil(4) + body
}

fn hash_texts<'a>(texts: impl Iterator<Item = &'a str>) -> String {
    let mut hasher = Sha256::new();
    for text in texts {
        hasher.update(text.as_bytes());
        // Record separator so ["ab","c"] and ["a","bc"] hash differently.
        hasher.update([0x1e]);
    }
    hex_digest(hasher)
}

fn hex_digest(hasher: Sha256) -> String {
    let digest = hasher.finalize();
    let mut out = String::with_capacity(digest.len() * 2);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Fingerprint of a whole request: SHA-256 over the system prompt and the
/// concatenated text parts of every message, in order. Keyed scripted
/// backends match on this.
pub fn conversation_fingerprint(req: &ChatRequest) -> String {
    let system = req.system.as_deref().into_iter();
    let parts = req
        .messages
        .iter()
        .flat_map(|m| m.parts.iter().filter_map(|p| p.as_text()));
    hash_texts(system.chain(parts))
}

/// Fingerprint of a message prefix (the context prepended before a test
/// question): SHA-256 over the concatenated text parts, in order.
pub fn context_fingerprint(messages: &[ChatMessage]) -> String {
    hash_texts(messages.iter().flat_map(|m| m.parts.iter().filter_map(|p| p.as_text())))
}
