//! Support/test corpus: manifest loading and validation, uniform frame
//! subsampling, and timestamp annotation.
//!
//! The corpus is immutable after load and safe to share read-only across
//! worker threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Answer choice label of a four-way multiple-choice question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
    C,
    D,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::A, Label::B, Label::C, Label::D];

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::A => "A",
            Label::B => "B",
            Label::C => "C",
            Label::D => "D",
        }
    }

    pub fn from_char(c: char) -> Option<Label> {
        match c {
            'A' => Some(Label::A),
            'B' => Some(Label::B),
            'C' => Some(Label::C),
            'D' => Some(Label::D),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The four answer options of one question, keyed A through D.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Choices {
    #[serde(rename = "A")]
    pub a: String,
    #[serde(rename = "B")]
    pub b: String,
    #[serde(rename = "C")]
    pub c: String,
    #[serde(rename = "D")]
    pub d: String,
}

impl Choices {
    pub fn new(
        a: impl Into<String>,
        b: impl Into<String>,
        c: impl Into<String>,
        d: impl Into<String>,
    ) -> Self {
        Choices { a: a.into(), b: b.into(), c: c.into(), d: d.into() }
    }

    pub fn get(&self, label: Label) -> &str {
        match label {
            Label::A => &self.a,
            Label::B => &self.b,
            Label::C => &self.c,
            Label::D => &self.d,
        }
    }

    /// Single-line rendering used in question turns:
    /// `A: {text}  B: {text}  C: {text}  D: {text}`.
    pub fn render_line(&self) -> String {
        format!("A: {}  B: {}  C: {}  D: {}", self.a, self.b, self.c, self.d)
    }
}

/// Reference to one pre-extracted video frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    /// Path or URL of the frame image. Opaque until send time.
    pub uri: String,
    /// Zero-based frame ordinal within the clip.
    pub index: u64,
    /// Seconds from clip start, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_s: Option<f64>,
}

impl FrameRef {
    pub fn new(uri: impl Into<String>, index: u64) -> Self {
        FrameRef { uri: uri.into(), index, timestamp_s: None }
    }

    /// Timestamp prefix rendered immediately before the frame's image part,
    /// e.g. `[Frame at 1.0s]`. `None` when the frame carries no timestamp.
    pub fn timestamp_prefix(&self) -> Option<String> {
        self.timestamp_s.map(|t| format!("[Frame at {:.1}s]", t))
    }
}

/// One QA item: frames, question, four choices, and (for support items)
/// the ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub domain: String,
    /// Clip identifier used to look up frames-per-second in `Corpus::fps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_id: Option<String>,
    pub frames: Vec<FrameRef>,
    pub question: String,
    pub choices: Choices,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_type: Option<String>,
}

/// A validated support/test corpus loaded from a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub domains: Vec<String>,
    /// Frames-per-second per video id, for timestamp derivation.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fps: BTreeMap<String, f64>,
    pub support: Vec<Example>,
    pub test: Vec<Example>,
}

impl Corpus {
    /// Frames-per-second for an example's clip, when the manifest supplies it.
    pub fn fps_for(&self, example: &Example) -> Option<f64> {
        example.video_id.as_ref().and_then(|v| self.fps.get(v)).copied()
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for (video, fps) in &self.fps {
            if !fps.is_finite() || *fps <= 0.0 {
                return Err(CorpusError::SchemaViolation {
                    field: format!("fps.{video}"),
                    reason: format!("fps must be positive, got {fps}"),
                });
            }
        }
        let domains: BTreeSet<&str> = self.domains.iter().map(|d| d.as_str()).collect();
        let mut seen_ids = BTreeSet::new();
        for (example, in_support) in self
            .support
            .iter()
            .map(|e| (e, true))
            .chain(self.test.iter().map(|e| (e, false)))
        {
            if !seen_ids.insert(example.id.clone()) {
                return Err(CorpusError::SchemaViolation {
                    field: "id".to_string(),
                    reason: format!("duplicate example id '{}'", example.id),
                });
            }
            if !domains.contains(example.domain.as_str()) {
                return Err(CorpusError::SchemaViolation {
                    field: format!("{}.domain", example.id),
                    reason: format!("'{}' is not a declared domain", example.domain),
                });
            }
            if in_support && example.answer.is_none() {
                return Err(CorpusError::MissingAnswerInSupport(example.id.clone()));
            }
            validate_frames(&example.id, &example.frames)?;
        }
        Ok(())
    }
}

fn validate_frames(id: &str, frames: &[FrameRef]) -> Result<(), CorpusError> {
    if frames.is_empty() {
        return Err(CorpusError::SchemaViolation {
            field: format!("{id}.frames"),
            reason: "frame list is empty".to_string(),
        });
    }
    let mut prev_index: Option<u64> = None;
    let mut prev_ts: Option<f64> = None;
    for frame in frames {
        if let Some(p) = prev_index {
            if frame.index <= p {
                return Err(CorpusError::SchemaViolation {
                    field: format!("{id}.frames"),
                    reason: format!("frame indices must be strictly increasing ({} after {p})", frame.index),
                });
            }
        }
        prev_index = Some(frame.index);
        if let Some(ts) = frame.timestamp_s {
            if !ts.is_finite() || ts < 0.0 {
                return Err(CorpusError::SchemaViolation {
                    field: format!("{id}.frames"),
                    reason: format!("timestamp must be non-negative, got {ts}"),
                });
            }
            if let Some(p) = prev_ts {
                if ts < p {
                    return Err(CorpusError::SchemaViolation {
                        field: format!("{id}.frames"),
                        reason: format!("timestamps must be non-decreasing ({ts} after {p})"),
                    });
                }
            }
            prev_ts = Some(ts);
        }
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest not found: {0}")]
    ManifestNotFound(String),
    #[error("schema violation in {field}: {reason}")]
    SchemaViolation { field: String, reason: String },
    #[error("support example '{0}' is missing its ground-truth answer")]
    MissingAnswerInSupport(String),
    #[error("frame list is empty")]
    EmptyFrameList,
    #[error("frame budget must be at least 1, got {0}")]
    InvalidK(usize),
    #[error("fps must be positive, got {0}")]
    InvalidFps(f64),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Load and validate a corpus manifest (one JSON document, UTF-8).
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let raw = match fs::read_to_string(path) {
        Ok(raw) => raw,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CorpusError::ManifestNotFound(path.display().to_string()))
        }
        Err(e) => return Err(CorpusError::Io { path: path.display().to_string(), source: e }),
    };
    let corpus: Corpus = serde_json::from_str(&raw).map_err(|e| CorpusError::SchemaViolation {
        field: "manifest".to_string(),
        reason: e.to_string(),
    })?;
    corpus.validate()?;
    Ok(corpus)
}

/// Write a corpus back out as a manifest. Key order is stable, so
/// `load_manifest(save_manifest(c))` round-trips losslessly.
pub fn save_manifest(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let body = serde_json::to_string_pretty(corpus).expect("corpus serializes");
    fs::write(path, body + "\n")
        .map_err(|e| CorpusError::Io { path: path.display().to_string(), source: e })
}

/// Uniformly subsample `frames` down to at most `k` entries.
///
/// For `|frames| > k >= 2` the selected positions are
/// `round_half_up(j * (N-1) / (k-1))` for `j = 0..k-1`, which always keeps
/// the first and last frame; `k = 1` keeps the single middle frame at
/// position `floor((N-1)/2)`. Order is preserved and no frame repeats.
pub fn sample_frames(frames: &[FrameRef], k: usize) -> Result<Vec<FrameRef>, CorpusError> {
    if frames.is_empty() {
        return Err(CorpusError::EmptyFrameList);
    }
    if k < 1 {
        return Err(CorpusError::InvalidK(k));
    }
    let n = frames.len();
    if n <= k {
        return Ok(frames.to_vec());
    }
    if k == 1 {
        return Ok(vec![frames[(n - 1) / 2].clone()]);
    }
    // round_half_up(p/q) computed as floor((2p + q) / 2q) in integers, so
    // the selection is identical on every platform.
    let q = k - 1;
    let picked = (0..k)
        .map(|j| {
            let p = j * (n - 1);
            let pos = (2 * p + q) / (2 * q);
            frames[pos].clone()
        })
        .collect();
    Ok(picked)
}

/// Derive `timestamp_s = index / fps` for every frame.
///
/// Rendering later emits `[Frame at {t}s]` (one decimal place) immediately
/// before each timestamped frame's image part.
pub fn annotate_timestamps(frames: &[FrameRef], fps: f64) -> Result<Vec<FrameRef>, CorpusError> {
    if frames.is_empty() {
        return Err(CorpusError::EmptyFrameList);
    }
    if !fps.is_finite() || fps <= 0.0 {
        return Err(CorpusError::InvalidFps(fps));
    }
    Ok(frames
        .iter()
        .map(|f| {
            let mut f = f.clone();
            f.timestamp_s = Some(f.index as f64 / fps);
            f
        })
        .collect())
}
