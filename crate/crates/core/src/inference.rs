//! Strategy-based context assembly, answer extraction, and batched
//! inference over the test set.
//!
//! Each test question is dispatched as a fresh conversation: the strategy
//! decides what gets prepended (nothing, raw support QA pairs, or the
//! stored reflective dialogue), and nothing leaks between questions.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};

use regex::Regex;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::backend::{
    context_fingerprint, estimate_tokens_with, ChatBackend, ChatMessage, ChatRequest, ContentPart,
    GenParams, Usage, DEFAULT_IMAGE_TOKENS,
};
use crate::corpus::{annotate_timestamps, sample_frames, Corpus, CorpusError, Example, Label};
use crate::dialogue::{DialogueError, ReflectiveDialogue};

/// Separator inserted between the prepended dialogue and the test question.
pub const SEPARATOR_TEXT: &str = "Warm-up complete. Now answer the following question";

/// Instruction appended to every system prompt.
pub const ANSWER_INSTRUCTION: &str = "Answer as \"Final Answer: X\" (where X is A, B, C, or D).";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    ZeroShot,
    Icl,
    Rd,
}

impl StrategyKind {
    pub fn parse(s: &str) -> Option<StrategyKind> {
        match s {
            "zero-shot" => Some(StrategyKind::ZeroShot),
            "icl" => Some(StrategyKind::Icl),
            "rd" => Some(StrategyKind::Rd),
            _ => None,
        }
    }
}

/// How to condition the model for each test question.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub with_timestamps: bool,
    pub frame_budget: usize,
    pub separator_enabled: bool,
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy {
            kind: StrategyKind::ZeroShot,
            with_timestamps: false,
            frame_budget: 5,
            separator_enabled: true,
        }
    }
}

impl Strategy {
    /// Row label used in records and reports, e.g. `rd+timestamps`.
    pub fn label(&self) -> String {
        let base = match self.kind {
            StrategyKind::ZeroShot => "zero-shot",
            StrategyKind::Icl => "icl",
            StrategyKind::Rd => "rd",
        };
        if self.with_timestamps {
            format!("{base}+timestamps")
        } else {
            base.to_string()
        }
    }
}

/// Extracted answer: one of the four labels, or nothing parseable.
/// Unparsed predictions always score as incorrect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    Answer(Label),
    Unparsed,
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prediction::Answer(label) => f.write_str(label.as_str()),
            Prediction::Unparsed => f.write_str("Unparsed"),
        }
    }
}

impl Serialize for Prediction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Prediction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        match raw.as_str() {
            "A" => Ok(Prediction::Answer(Label::A)),
            "B" => Ok(Prediction::Answer(Label::B)),
            "C" => Ok(Prediction::Answer(Label::C)),
            "D" => Ok(Prediction::Answer(Label::D)),
            "Unparsed" => Ok(Prediction::Unparsed),
            other => Err(D::Error::custom(format!("invalid prediction {other:?}"))),
        }
    }
}

/// Extract the final answer label from a completion.
///
/// The last `Final Answer: X` wins (marker case-insensitive, letter exact);
/// failing that, the last standalone A-D letter bounded by
/// non-alphanumerics; failing that, `Unparsed`. Total over all inputs.
pub fn extract_answer(raw: &str) -> Prediction {
    static MARKER: OnceLock<Regex> = OnceLock::new();
    let marker = MARKER.get_or_init(|| Regex::new(r"(?i:final answer:)\s*([ABCD])").unwrap());
    if let Some(captures) = marker.captures_iter(raw).last() {
        let letter = captures.get(1).unwrap().as_str().chars().next().unwrap();
        return Prediction::Answer(Label::from_char(letter).unwrap());
    }

    let chars: Vec<char> = raw.chars().collect();
    let mut found = None;
    for (i, &c) in chars.iter().enumerate() {
        if Label::from_char(c).is_none() {
            continue;
        }
        let prev_ok = i == 0 || !chars[i - 1].is_alphanumeric();
        let next_ok = i + 1 == chars.len() || !chars[i + 1].is_alphanumeric();
        if prev_ok && next_ok {
            found = Label::from_char(c);
        }
    }
    match found {
        Some(label) => Prediction::Answer(label),
        None => Prediction::Unparsed,
    }
}

/// Outcome of one test question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub example_id: String,
    pub strategy: String,
    pub predicted: Prediction,
    pub raw_text: String,
    pub usage: Usage,
    /// Fingerprint of the prepended context; identical across questions
    /// sharing a prefix, which is what the cache cost model groups on.
    pub context_fingerprint: String,
    /// Estimated token size of the prepended context.
    pub context_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("no system prompt configured for domain '{0}'")]
    MissingSystemPrompt(String),
    #[error("no question type known for test example '{0}'")]
    MissingQuestionType(String),
    #[error("no fps known for video '{0}' but timestamps were requested")]
    MissingFps(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error("configuration error: {0}")]
    ConfigError(String),
}

/// Per-domain system prompts. With the default template enabled, unknown
/// domains get the generic expert phrasing; a strict map errors instead.
#[derive(Debug, Clone)]
pub struct SystemPrompts {
    map: BTreeMap<String, String>,
    use_default_template: bool,
}

impl Default for SystemPrompts {
    fn default() -> Self {
        SystemPrompts { map: BTreeMap::new(), use_default_template: true }
    }
}

impl SystemPrompts {
    /// Only the supplied map; unknown domains are an error.
    pub fn strict(map: BTreeMap<String, String>) -> Self {
        SystemPrompts { map, use_default_template: false }
    }

    /// Supplied map with the default template as fallback.
    pub fn with_overrides(map: BTreeMap<String, String>) -> Self {
        SystemPrompts { map, use_default_template: true }
    }

    /// Full system prompt for a domain: the expert sentence plus the
    /// answer-format instruction.
    pub fn resolve(&self, domain: &str) -> Result<String, InferenceError> {
        let base = match self.map.get(domain) {
            Some(text) => text.clone(),
            None if self.use_default_template => default_domain_prompt(domain),
            None => return Err(InferenceError::MissingSystemPrompt(domain.to_string())),
        };
        Ok(format!("{base} {ANSWER_INSTRUCTION}"))
    }
}

/// Default expert sentence per domain. Only the surgery wording is
/// standard; the others substitute a domain noun into the same template.
pub fn default_domain_prompt(domain: &str) -> String {
    let noun = match domain {
        "surgery" => "surgical procedures",
        "industry" => "industrial procedures",
        "xsports" => "extreme sports",
        "animal" => "animal behavior",
        other => return format!("You are an expert analyzing egocentric video frames from the {other} domain."),
    };
    format!("You are an expert analyzing egocentric video frames from {noun}.")
}

/// What to do for an RD question whose (domain, qtype) has no stored
/// dialogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RdFallback {
    /// Answer zero-shot with a logged warning (default).
    ZeroShot,
    /// Prepend every dialogue of the question's domain, concatenated in
    /// qtype order.
    DomainConcat,
}

/// Everything needed to turn a test example into a [`ChatRequest`].
pub struct ContextAssembler {
    strategy: Strategy,
    prompts: SystemPrompts,
    fps: BTreeMap<String, f64>,
    support_by_domain: BTreeMap<String, Vec<Example>>,
    dialogues: BTreeMap<(String, String), ReflectiveDialogue>,
    types: BTreeMap<String, String>,
    rd_fallback: RdFallback,
    gen: GenParams,
    image_tokens: u64,
}

/// An assembled request plus the prefix bookkeeping the cost model needs.
#[derive(Debug, Clone)]
pub struct AssembledContext {
    pub request: ChatRequest,
    pub context_fingerprint: String,
    pub context_tokens: u64,
    pub note: Option<String>,
}

impl ContextAssembler {
    pub fn new(strategy: Strategy, prompts: SystemPrompts) -> Self {
        ContextAssembler {
            strategy,
            prompts,
            fps: BTreeMap::new(),
            support_by_domain: BTreeMap::new(),
            dialogues: BTreeMap::new(),
            types: BTreeMap::new(),
            rd_fallback: RdFallback::ZeroShot,
            gen: GenParams::default(),
            image_tokens: DEFAULT_IMAGE_TOKENS,
        }
    }

    /// Support examples (manifest order preserved) for ICL prefixes, plus
    /// the fps table for timestamp annotation.
    pub fn with_corpus(mut self, corpus: &Corpus) -> Self {
        self.fps = corpus.fps.clone();
        for example in &corpus.support {
            self.support_by_domain
                .entry(example.domain.clone())
                .or_default()
                .push(example.clone());
        }
        self
    }

    pub fn with_dialogues(mut self, dialogues: Vec<ReflectiveDialogue>) -> Self {
        for dialogue in dialogues {
            self.dialogues
                .insert((dialogue.domain.clone(), dialogue.qtype.clone()), dialogue);
        }
        self
    }

    /// Question types per test example id (RD retrieval).
    pub fn with_types(mut self, types: BTreeMap<String, String>) -> Self {
        self.types = types;
        self
    }

    pub fn with_rd_fallback(mut self, fallback: RdFallback) -> Self {
        self.rd_fallback = fallback;
        self
    }

    pub fn with_gen(mut self, gen: GenParams) -> Self {
        self.gen = gen;
        self
    }

    pub fn with_image_tokens(mut self, image_tokens: u64) -> Self {
        self.image_tokens = image_tokens;
        self
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    fn frame_parts(&self, example: &Example) -> Result<Vec<ContentPart>, InferenceError> {
        let frames = sample_frames(&example.frames, self.strategy.frame_budget)?;
        let frames = if self.strategy.with_timestamps {
            let video = example.video_id.clone().unwrap_or_else(|| example.id.clone());
            let fps = *self
                .fps
                .get(&video)
                .ok_or_else(|| InferenceError::MissingFps(video.clone()))?;
            annotate_timestamps(&frames, fps)?
        } else {
            frames
        };
        let mut parts = Vec::with_capacity(2 * frames.len());
        for frame in frames {
            if let Some(prefix) = frame.timestamp_prefix() {
                parts.push(ContentPart::text(prefix));
            }
            parts.push(ContentPart::image(frame));
        }
        Ok(parts)
    }

    fn question_message(
        &self,
        example: &Example,
        separator: bool,
    ) -> Result<ChatMessage, InferenceError> {
        let mut parts = Vec::new();
        if separator {
            parts.push(ContentPart::text(SEPARATOR_TEXT));
        }
        parts.extend(self.frame_parts(example)?);
        parts.push(ContentPart::text(format!(
            "{}\n{}",
            example.question,
            example.choices.render_line()
        )));
        Ok(ChatMessage::user(parts))
    }

    /// Context messages prepended before the test question, plus a note
    /// when a fallback was engaged.
    fn prefix_messages(
        &self,
        example: &Example,
    ) -> Result<(Vec<ChatMessage>, Option<String>), InferenceError> {
        match self.strategy.kind {
            StrategyKind::ZeroShot => Ok((Vec::new(), None)),
            StrategyKind::Icl => {
                let mut messages = Vec::new();
                for support in self.support_by_domain.get(&example.domain).map(Vec::as_slice).unwrap_or(&[]) {
                    let answer = match support.answer {
                        Some(answer) => answer,
                        None => continue,
                    };
                    messages.push(self.question_message(support, false)?);
                    messages.push(ChatMessage::assistant(vec![ContentPart::text(format!(
                        "Final Answer: {answer}"
                    ))]));
                }
                Ok((messages, None))
            }
            StrategyKind::Rd => {
                let qtype = self
                    .types
                    .get(&example.id)
                    .cloned()
                    .or_else(|| example.question_type.clone())
                    .ok_or_else(|| InferenceError::MissingQuestionType(example.id.clone()))?;
                if let Some(dialogue) =
                    self.dialogues.get(&(example.domain.clone(), qtype.clone()))
                {
                    return Ok((dialogue.to_messages(), None));
                }
                match self.rd_fallback {
                    RdFallback::DomainConcat => {
                        let mut messages = Vec::new();
                        for ((domain, _), dialogue) in &self.dialogues {
                            if *domain == example.domain {
                                messages.extend(dialogue.to_messages());
                            }
                        }
                        if !messages.is_empty() {
                            let note = format!(
                                "no dialogue for ({}, {qtype}); used domain-level concatenation",
                                example.domain
                            );
                            log::warn!("{note}");
                            return Ok((messages, Some(note)));
                        }
                        let note = format!(
                            "no dialogue for domain '{}'; fell back to zero-shot",
                            example.domain
                        );
                        log::warn!("{note}");
                        Ok((Vec::new(), Some(note)))
                    }
                    RdFallback::ZeroShot => {
                        let note = format!(
                            "no dialogue for ({}, {qtype}); fell back to zero-shot",
                            example.domain
                        );
                        log::warn!("{note}");
                        Ok((Vec::new(), Some(note)))
                    }
                }
            }
        }
    }

    /// Build the full request for one test question.
    pub fn assemble(&self, example: &Example) -> Result<AssembledContext, InferenceError> {
        let system = self.prompts.resolve(&example.domain)?;
        let (prefix, note) = self.prefix_messages(example)?;
        let fingerprint = context_fingerprint(&prefix);
        let context_tokens = prefix
            .iter()
            .map(|m| estimate_tokens_with(&m.parts, self.image_tokens))
            .sum();
        // The separator belongs between a reflective dialogue and the test
        // question; plain ICL prefixes go without one.
        let separator = self.strategy.kind == StrategyKind::Rd
            && self.strategy.separator_enabled
            && !prefix.is_empty();
        let mut messages = prefix;
        messages.push(self.question_message(example, separator)?);
        Ok(AssembledContext {
            request: ChatRequest::new(Some(system), messages, self.gen),
            context_fingerprint: fingerprint,
            context_tokens,
            note,
        })
    }
}

/// Run every test question through the backend with bounded fan-out.
///
/// Results come back in input order regardless of completion order.
/// Per-question failures are recorded on the item (predicted `Unparsed`,
/// note set) and never abort the batch.
pub fn run_inference(
    test: &[Example],
    assembler: &ContextAssembler,
    backend: &dyn ChatBackend,
    concurrency: usize,
) -> Result<Vec<PredictionRecord>, InferenceError> {
    if concurrency < 1 {
        return Err(InferenceError::ConfigError(
            "concurrency must be at least 1".to_string(),
        ));
    }
    let strategy_label = assembler.strategy().label();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<PredictionRecord>>> = Mutex::new(vec![None; test.len()]);

    std::thread::scope(|scope| {
        for _ in 0..concurrency.min(test.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= test.len() {
                    return;
                }
                let record = run_one(&test[i], assembler, backend, &strategy_label);
                slots.lock().expect("inference results lock")[i] = Some(record);
            });
        }
    });

    let records = slots
        .into_inner()
        .expect("inference results lock")
        .into_iter()
        .map(|slot| slot.expect("every slot filled"))
        .collect();
    Ok(records)
}

fn run_one(
    example: &Example,
    assembler: &ContextAssembler,
    backend: &dyn ChatBackend,
    strategy_label: &str,
) -> PredictionRecord {
    let assembled = match assembler.assemble(example) {
        Ok(assembled) => assembled,
        Err(e) => {
            return PredictionRecord {
                example_id: example.id.clone(),
                strategy: strategy_label.to_string(),
                predicted: Prediction::Unparsed,
                raw_text: String::new(),
                usage: Usage::default(),
                context_fingerprint: context_fingerprint(&[]),
                context_tokens: 0,
                note: Some(format!("context assembly failed: {e}")),
            }
        }
    };
    match backend.complete(&assembled.request) {
        Ok(completion) => PredictionRecord {
            example_id: example.id.clone(),
            strategy: strategy_label.to_string(),
            predicted: extract_answer(&completion.text),
            raw_text: completion.text,
            usage: completion.usage,
            context_fingerprint: assembled.context_fingerprint,
            context_tokens: assembled.context_tokens,
            note: assembled.note,
        },
        Err(e) => PredictionRecord {
            example_id: example.id.clone(),
            strategy: strategy_label.to_string(),
            predicted: Prediction::Unparsed,
            raw_text: String::new(),
            usage: Usage::default(),
            context_fingerprint: assembled.context_fingerprint,
            context_tokens: assembled.context_tokens,
            note: Some(format!("backend error: {e}")),
        },
    }
}

/// Write records as JSON Lines, one per line, stable field order.
pub fn write_records(path: impl AsRef<Path>, records: &[PredictionRecord]) -> std::io::Result<()> {
    let mut out = fs::File::create(path)?;
    for record in records {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> std::io::Result<Vec<PredictionRecord>> {
    let file = fs::File::open(path)?;
    let mut records = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        records.push(record);
    }
    Ok(records)
}
