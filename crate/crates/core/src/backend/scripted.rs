//! Deterministic scripted backend for tests and offline pipeline runs.
//!
//! Responses come either FIFO from an ordered list, or keyed by the
//! conversation fingerprint of the incoming request so answers do not
//! depend on call order. Every request is recorded for assertion. Usage is
//! synthesized from the token estimate heuristic; nothing is ever cached.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{
    conversation_fingerprint, estimate_request_tokens, estimate_tokens_with, BackendError,
    ChatBackend, ChatRequest, Completion, ContentPart, Usage, DEFAULT_IMAGE_TOKENS,
};

enum Script {
    Fifo { responses: VecDeque<String>, total: usize },
    Keyed(BTreeMap<String, String>),
}

pub struct ScriptedBackend {
    script: Mutex<Script>,
    recorded: Mutex<Vec<ChatRequest>>,
    calls: AtomicUsize,
    image_tokens: u64,
}

impl ScriptedBackend {
    /// Responses handed out in order; call n+1 against an n-entry script
    /// fails with `ScriptExhausted`.
    pub fn fifo<S: Into<String>>(responses: Vec<S>) -> Self {
        let responses: VecDeque<String> = responses.into_iter().map(Into::into).collect();
        let total = responses.len();
        ScriptedBackend {
            script: Mutex::new(Script::Fifo { responses, total }),
            recorded: Mutex::new(Vec::new()),
            calls: AtomicUsize::new(0),
            image_tokens: DEFAULT_IMAGE_TOKENS,
        }
    }

    /// Responses keyed by [`conversation_fingerprint`]; an unknown request
    /// fails with `UnmatchedKey`.
    pub fn keyed(map: BTreeMap<String, String>) -> Self {
        ScriptedBackend {
            script: Mutex::new(Script::Keyed(map)),
            recorded: Mutex::new(Vec::new()),
            calls: AtomicUsize::new(0),
            image_tokens: DEFAULT_IMAGE_TOKENS,
        }
    }

    /// Load a script file: a JSON array means FIFO mode, a JSON object maps
    /// conversation fingerprints to responses.
    pub fn from_script_file(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let file_err = |reason: String| BackendError::ScriptFile {
            path: path.display().to_string(),
            reason,
        };
        let raw = fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let value: serde_json::Value =
            serde_json::from_str(&raw).map_err(|e| file_err(e.to_string()))?;
        match value {
            serde_json::Value::Array(items) => {
                let mut responses = Vec::with_capacity(items.len());
                for item in items {
                    match item {
                        serde_json::Value::String(s) => responses.push(s),
                        other => return Err(file_err(format!("expected string entry, got {other}"))),
                    }
                }
                Ok(ScriptedBackend::fifo(responses))
            }
            serde_json::Value::Object(map) => {
                let mut keyed = BTreeMap::new();
                for (key, item) in map {
                    match item {
                        serde_json::Value::String(s) => {
                            keyed.insert(key, s);
                        }
                        other => return Err(file_err(format!("expected string value, got {other}"))),
                    }
                }
                Ok(ScriptedBackend::keyed(keyed))
            }
            other => Err(file_err(format!("expected JSON list or map, got {other}"))),
        }
    }

    pub fn with_image_tokens(mut self, image_tokens: u64) -> Self {
        self.image_tokens = image_tokens;
        self
    }

    /// Number of completions served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Every request seen, in arrival order.
    pub fn recorded(&self) -> Vec<ChatRequest> {
        self.recorded.lock().expect("scripted backend lock").clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<Completion, BackendError> {
        req.validate()?;
        // One lock covers pop + record so FIFO order is well-defined under
        // concurrent callers.
        let text = {
            let mut script = self.script.lock().expect("scripted backend lock");
            let text = match &mut *script {
                Script::Fifo { responses, total } => {
                    responses.pop_front().ok_or(BackendError::ScriptExhausted(*total))?
                }
                Script::Keyed(map) => {
                    let fingerprint = conversation_fingerprint(req);
                    map.get(&fingerprint)
                        .cloned()
                        .ok_or(BackendError::UnmatchedKey(fingerprint))?
                }
            };
            self.recorded.lock().expect("scripted backend lock").push(req.clone());
            self.calls.fetch_add(1, Ordering::SeqCst);
            text
        };
        let usage = Usage {
            input_tokens: estimate_request_tokens(req, self.image_tokens),
            output_tokens: estimate_tokens_with(&[ContentPart::text(text.clone())], self.image_tokens),
            cached_input_tokens: 0,
        };
        Ok(Completion { text, usage })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ChatMessage, GenParams};

    fn ask(text: &str) -> ChatRequest {
        ChatRequest::new(
            None,
            vec![ChatMessage::user(vec![ContentPart::text(text)])],
            GenParams::default(),
        )
    }

    #[test]
    fn fifo_returns_in_order_then_exhausts() {
        let backend = ScriptedBackend::fifo(vec!["x", "y"]);
        assert_eq!(backend.complete(&ask("q1")).unwrap().text, "x");
        assert_eq!(backend.complete(&ask("q2")).unwrap().text, "y");
        match backend.complete(&ask("q3")).unwrap_err() {
            BackendError::ScriptExhausted(n) => assert_eq!(n, 2),
            other => panic!("unexpected error {other:?}"),
        }
        assert_eq!(backend.calls(), 2);
        assert_eq!(backend.recorded().len(), 2);
    }

    #[test]
    fn keyed_answers_by_fingerprint_regardless_of_call_order() {
        let q1 = ask("What is in the pan?");
        let q2 = ask("What tool is held?");
        let mut map = BTreeMap::new();
        map.insert(conversation_fingerprint(&q1), "Final Answer: B".to_string());
        map.insert(conversation_fingerprint(&q2), "Final Answer: D".to_string());

        let backend = ScriptedBackend::keyed(map.clone());
        assert_eq!(backend.complete(&q2).unwrap().text, "Final Answer: D");
        assert_eq!(backend.complete(&q1).unwrap().text, "Final Answer: B");

        // Permuted order, fresh backend: same responses per request.
        let backend = ScriptedBackend::keyed(map);
        assert_eq!(backend.complete(&q1).unwrap().text, "Final Answer: B");
        assert_eq!(backend.complete(&q2).unwrap().text, "Final Answer: D");
        assert_eq!(backend.complete(&q1).unwrap().text, "Final Answer: B");
    }

    #[test]
    fn keyed_miss_reports_fingerprint() {
        let backend = ScriptedBackend::keyed(BTreeMap::new());
        match backend.complete(&ask("q")).unwrap_err() {
            BackendError::UnmatchedKey(fp) => assert_eq!(fp.len(), 64),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn usage_is_synthesized_from_estimates() {
        let backend = ScriptedBackend::fifo(vec!["12345678"]);
        let completion = backend.complete(&ask("1234")).unwrap();
        assert_eq!(completion.usage.input_tokens, 1);
        assert_eq!(completion.usage.output_tokens, 2);
        assert_eq!(completion.usage.cached_input_tokens, 0);
    }

    #[test]
    fn complete_does_not_mutate_the_request() {
        let backend = ScriptedBackend::fifo(vec!["ok"]);
        let req = ask("q");
        let before = req.clone();
        backend.complete(&req).unwrap();
        assert_eq!(req, before);
    }

    #[test]
    fn script_files_load_in_both_modes() {
        let dir = tempfile::tempdir().unwrap();
        let fifo_path = dir.path().join("fifo.json");
        std::fs::write(&fifo_path, r#"["a", "b"]"#).unwrap();
        let backend = ScriptedBackend::from_script_file(&fifo_path).unwrap();
        assert_eq!(backend.complete(&ask("q")).unwrap().text, "a");

        let q = ask("hello");
        let keyed_path = dir.path().join("keyed.json");
        let map = serde_json::json!({ conversation_fingerprint(&q): "r" });
        std::fs::write(&keyed_path, serde_json::to_string(&map).unwrap()).unwrap();
        let backend = ScriptedBackend::from_script_file(&keyed_path).unwrap();
        assert_eq!(backend.complete(&q).unwrap().text, "r");

        let bad_path = dir.path().join("bad.json");
        std::fs::write(&bad_path, "42").unwrap();
        assert!(matches!(
            ScriptedBackend::from_script_file(&bad_path),
            Err(BackendError::ScriptFile { .. })
        ));
    }
}
