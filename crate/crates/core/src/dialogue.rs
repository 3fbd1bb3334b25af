//! Reflective dialogue construction and persistence.
//!
//! For each support example of one (domain, question type) group the
//! Teacher poses the question, the Solver answers, the Teacher gives
//! correctness feedback, and the Solver reflects. The four-turn exchanges
//! are concatenated into one growing conversation so later questions see
//! the full history, and the result is stored as a JSON file that is
//! reused verbatim as inference context.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    BackendError, ChatBackend, ChatMessage, ChatRequest, ContentPart, GenParams, Role,
};
use crate::corpus::{annotate_timestamps, sample_frames, CorpusError, Example, Label};
use crate::inference::{extract_answer, Prediction};
use crate::taxonomy::{normalize_label, TypedExample};

/// Dialogue role. Teacher turns carry questions, frames, and feedback;
/// Solver turns are text only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Teacher,
    Solver,
}

impl From<Speaker> for Role {
    fn from(speaker: Speaker) -> Role {
        match speaker {
            Speaker::Teacher => Role::User,
            Speaker::Solver => Role::Assistant,
        }
    }
}

impl From<Role> for Speaker {
    fn from(role: Role) -> Speaker {
        match role {
            Role::User => Speaker::Teacher,
            Role::Assistant => Speaker::Solver,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub parts: Vec<ContentPart>,
}

impl Turn {
    pub fn teacher(parts: Vec<ContentPart>) -> Self {
        Turn { speaker: Speaker::Teacher, parts }
    }

    pub fn solver(text: impl Into<String>) -> Self {
        Turn { speaker: Speaker::Solver, parts: vec![ContentPart::text(text)] }
    }

    /// Concatenated text content, image parts skipped.
    pub fn rendered_text(&self) -> String {
        self.parts.iter().filter_map(|p| p.as_text()).collect::<Vec<_>>().join("")
    }

    pub fn to_message(&self) -> ChatMessage {
        ChatMessage { role: self.speaker.into(), parts: self.parts.clone() }
    }
}

/// What the Solver answered for one source example during construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOutcome {
    pub predicted: Prediction,
    pub correct: Label,
    pub was_correct: bool,
}

/// A stored Teacher/Solver conversation for one (domain, question type).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectiveDialogue {
    pub domain: String,
    pub qtype: String,
    pub source_ids: Vec<String>,
    pub solver_record: Vec<SolverOutcome>,
    pub turns: Vec<Turn>,
}

impl ReflectiveDialogue {
    /// Structural invariants: four turns per source example, alternating
    /// Teacher/Solver starting from Teacher.
    pub fn validate(&self) -> Result<(), DialogueError> {
        if self.turns.len() != 4 * self.source_ids.len() {
            return Err(DialogueError::CorruptDialogue(format!(
                "{} turns for {} source examples (expected {})",
                self.turns.len(),
                self.source_ids.len(),
                4 * self.source_ids.len()
            )));
        }
        if self.solver_record.len() != self.source_ids.len() {
            return Err(DialogueError::CorruptDialogue(format!(
                "{} solver outcomes for {} source examples",
                self.solver_record.len(),
                self.source_ids.len()
            )));
        }
        for (i, turn) in self.turns.iter().enumerate() {
            let expected = if i % 2 == 0 { Speaker::Teacher } else { Speaker::Solver };
            if turn.speaker != expected {
                return Err(DialogueError::CorruptDialogue(format!(
                    "turn {i} spoken by {:?}, expected {expected:?}",
                    turn.speaker
                )));
            }
        }
        Ok(())
    }

    /// The dialogue as chat messages (Teacher -> user, Solver -> assistant).
    pub fn to_messages(&self) -> Vec<ChatMessage> {
        self.turns.iter().map(Turn::to_message).collect()
    }
}

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("support set is empty")]
    EmptySupportSet,
    #[error("example '{id}' does not belong to group ({domain}, {qtype})")]
    WrongGroup { id: String, domain: String, qtype: String },
    #[error("support example '{0}' has no ground-truth answer")]
    MissingAnswer(String),
    #[error("no fps known for video '{0}' but timestamps were requested")]
    MissingFps(String),
    #[error("no dialogue stored for ({domain}, {qtype})")]
    DialogueNotFound { domain: String, qtype: String },
    #[error("corrupt dialogue: {0}")]
    CorruptDialogue(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Feedback the Teacher issues after seeing the Solver's answer.
///
/// An unparseable answer takes the incorrect branch with the predicted
/// label rendered as "an unclear answer".
pub fn feedback_message(predicted: &Prediction, correct: Label) -> String {
    match predicted {
        Prediction::Answer(label) if *label == correct => format!(
            "Correct. In 1-2 sentences, what key visual evidence from the frames confirmed that {correct} is the right answer?"
        ),
        _ => {
            let shown = match predicted {
                Prediction::Answer(label) => label.to_string(),
                Prediction::Unparsed => "an unclear answer".to_string(),
            };
            format!(
                "You answered {shown}, but the correct answer is {correct}. (1) What specific visual evidence in the frames supports {correct}? (2) Why does that evidence rule out {shown}? Answer in 2-3 sentences."
            )
        }
    }
}

/// Settings for dialogue construction.
#[derive(Debug, Clone)]
pub struct BuildOptions {
    /// Maximum frames per question turn (uniform subsampling).
    pub frame_budget: usize,
    /// Derive and render `[Frame at {t}s]` prefixes from `fps`.
    pub with_timestamps: bool,
    /// System prompt sent with every construction-phase completion.
    pub system_prompt: Option<String>,
    /// Frames-per-second per video id, used when `with_timestamps` is set.
    pub fps: BTreeMap<String, f64>,
    pub gen: GenParams,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            frame_budget: 5,
            with_timestamps: false,
            system_prompt: None,
            fps: BTreeMap::new(),
            gen: GenParams::default(),
        }
    }
}

/// The Teacher-side question turn for one example: timestamped sampled
/// frames, then the question text with the choices rendered on one line.
pub fn question_parts(example: &Example, options: &BuildOptions) -> Result<Vec<ContentPart>, DialogueError> {
    let frames = sample_frames(&example.frames, options.frame_budget)?;
    let frames = if options.with_timestamps {
        let video = example.video_id.clone().unwrap_or_else(|| example.id.clone());
        let fps = *options
            .fps
            .get(&video)
            .ok_or_else(|| DialogueError::MissingFps(video.clone()))?;
        annotate_timestamps(&frames, fps)?
    } else {
        frames
    };
    let mut parts = Vec::with_capacity(2 * frames.len() + 1);
    for frame in frames {
        if let Some(prefix) = frame.timestamp_prefix() {
            parts.push(ContentPart::text(prefix));
        }
        parts.push(ContentPart::image(frame));
    }
    parts.push(ContentPart::text(format!(
        "{}\n{}",
        example.question,
        example.choices.render_line()
    )));
    Ok(parts)
}

/// Build the reflective dialogue for one (domain, question type) group.
///
/// Examples are processed in the given order and every exchange is
/// appended to one growing conversation, so each backend call sees the
/// full history so far. With a deterministic backend the result is a pure
/// function of the inputs.
pub fn build_dialogue(
    domain: &str,
    qtype: &str,
    examples: &[TypedExample],
    backend: &dyn ChatBackend,
    options: &BuildOptions,
) -> Result<ReflectiveDialogue, DialogueError> {
    if examples.is_empty() {
        return Err(DialogueError::EmptySupportSet);
    }
    for typed in examples {
        if typed.example.domain != domain || typed.qtype != qtype {
            return Err(DialogueError::WrongGroup {
                id: typed.example.id.clone(),
                domain: domain.to_string(),
                qtype: qtype.to_string(),
            });
        }
        if typed.example.answer.is_none() {
            return Err(DialogueError::MissingAnswer(typed.example.id.clone()));
        }
    }

    let mut turns: Vec<Turn> = Vec::with_capacity(4 * examples.len());
    let mut messages: Vec<ChatMessage> = Vec::with_capacity(4 * examples.len());
    let mut source_ids = Vec::with_capacity(examples.len());
    let mut solver_record = Vec::with_capacity(examples.len());

    let push = |turn: Turn, turns: &mut Vec<Turn>, messages: &mut Vec<ChatMessage>| {
        messages.push(turn.to_message());
        turns.push(turn);
    };

    for typed in examples {
        let example = &typed.example;
        let correct = example.answer.expect("validated above");

        // Turn 1: Teacher poses the question.
        let question = Turn::teacher(question_parts(example, options)?);
        push(question, &mut turns, &mut messages);

        // Turn 2: Solver answers on the whole conversation so far.
        let request =
            ChatRequest::new(options.system_prompt.clone(), messages.clone(), options.gen);
        let answer = backend.complete(&request)?;
        let predicted = extract_answer(&answer.text);
        push(Turn::solver(answer.text), &mut turns, &mut messages);

        // Turn 3: Teacher gives correctness feedback.
        let feedback = Turn::teacher(vec![ContentPart::text(feedback_message(&predicted, correct))]);
        push(feedback, &mut turns, &mut messages);

        // Turn 4: Solver reflects.
        let request =
            ChatRequest::new(options.system_prompt.clone(), messages.clone(), options.gen);
        let reflection = backend.complete(&request)?;
        push(Turn::solver(reflection.text), &mut turns, &mut messages);

        source_ids.push(example.id.clone());
        solver_record.push(SolverOutcome {
            was_correct: predicted == Prediction::Answer(correct),
            predicted,
            correct,
        });
    }

    let dialogue = ReflectiveDialogue {
        domain: domain.to_string(),
        qtype: qtype.to_string(),
        source_ids,
        solver_record,
        turns,
    };
    dialogue.validate()?;
    Ok(dialogue)
}

/// Filesystem slug for a question-type label.
pub fn qtype_slug(qtype: &str) -> String {
    let norm = normalize_label(qtype);
    let mut slug = String::with_capacity(norm.len());
    let mut last_dash = true;
    for c in norm.chars() {
        if c.is_ascii_alphanumeric() {
            slug.push(c);
            last_dash = false;
        } else if !last_dash {
            slug.push('-');
            last_dash = true;
        }
    }
    while slug.ends_with('-') {
        slug.pop();
    }
    slug
}

/// Directory of stored dialogues, one canonical JSON file per
/// (domain, question type) named `{domain}__{qtype-slug}.json`.
#[derive(Debug, Clone)]
pub struct DialogueStore {
    dir: PathBuf,
}

impl DialogueStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DialogueStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, domain: &str, qtype: &str) -> PathBuf {
        self.dir.join(format!("{domain}__{}.json", qtype_slug(qtype)))
    }

    pub fn exists(&self, domain: &str, qtype: &str) -> bool {
        self.path_for(domain, qtype).is_file()
    }

    pub fn store(&self, dialogue: &ReflectiveDialogue) -> Result<PathBuf, DialogueError> {
        dialogue.validate()?;
        let io_err = |path: &Path, source: std::io::Error| DialogueError::Io {
            path: path.display().to_string(),
            source,
        };
        fs::create_dir_all(&self.dir).map_err(|e| io_err(&self.dir, e))?;
        let path = self.path_for(&dialogue.domain, &dialogue.qtype);
        let body = serde_json::to_string_pretty(dialogue).expect("dialogue serializes");
        fs::write(&path, body + "\n").map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    pub fn load(&self, domain: &str, qtype: &str) -> Result<ReflectiveDialogue, DialogueError> {
        let path = self.path_for(domain, qtype);
        if !path.is_file() {
            return Err(DialogueError::DialogueNotFound {
                domain: domain.to_string(),
                qtype: qtype.to_string(),
            });
        }
        let raw = fs::read_to_string(&path)
            .map_err(|e| DialogueError::Io { path: path.display().to_string(), source: e })?;
        let dialogue: ReflectiveDialogue = serde_json::from_str(&raw)
            .map_err(|e| DialogueError::CorruptDialogue(e.to_string()))?;
        dialogue.validate()?;
        Ok(dialogue)
    }

    /// Load every stored dialogue, sorted by file name.
    pub fn load_all(&self) -> Result<Vec<ReflectiveDialogue>, DialogueError> {
        let mut paths = Vec::new();
        let entries = match fs::read_dir(&self.dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => {
                return Err(DialogueError::Io { path: self.dir.display().to_string(), source: e })
            }
        };
        for entry in entries {
            let entry = entry
                .map_err(|e| DialogueError::Io { path: self.dir.display().to_string(), source: e })?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) == Some("json") {
                paths.push(path);
            }
        }
        paths.sort();
        let mut dialogues = Vec::with_capacity(paths.len());
        for path in paths {
            let raw = fs::read_to_string(&path)
                .map_err(|e| DialogueError::Io { path: path.display().to_string(), source: e })?;
            let dialogue: ReflectiveDialogue = serde_json::from_str(&raw)
                .map_err(|e| DialogueError::CorruptDialogue(format!("{}: {e}", path.display())))?;
            dialogue.validate()?;
            dialogues.push(dialogue);
        }
        Ok(dialogues)
    }
}
