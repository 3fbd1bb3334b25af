//! Question-type taxonomy: label normalization, backend response parsing,
//! and per-question classification with a pass-through fast path.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatBackend, ChatMessage, ChatRequest, ContentPart, GenParams};
use crate::corpus::Example;

/// Task categories a subtask label may be mapped to.
pub const CATEGORIES: [&str; 4] = ["identification", "localization", "prediction", "counting"];

/// Default classification prompt. `{question}` and `{labels}` are replaced
/// at render time; `{labels}` becomes a numbered list, one label per line.
pub const DEFAULT_CLASSIFIER_TEMPLATE: &str = "Select the most appropriate type for the following question.\n\nQuestion: {question}\n\nTypes:\n{labels}\n\nReply with one line containing only the type label.";

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error("could not resolve a question type from response: {0:?}")]
    UnresolvableType(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{path}: {reason}")]
    ConfigFile { path: String, reason: String },
}

/// The configured set of question-type labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    labels: Vec<String>,
    normalized: Vec<String>,
    categories: BTreeMap<String, String>,
}

/// On-disk taxonomy config: `{"labels": [...], "categories": {label: category},
/// "prompt_template": "..."}` with the last two optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaxonomyConfig {
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub categories: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_template: Option<String>,
}

impl Taxonomy {
    pub fn new(
        labels: Vec<String>,
        categories: BTreeMap<String, String>,
    ) -> Result<Self, TaxonomyError> {
        if labels.is_empty() {
            return Err(TaxonomyError::InvalidTaxonomy("labels must be nonempty".to_string()));
        }
        let mut normalized = Vec::with_capacity(labels.len());
        for label in &labels {
            let norm = normalize_label(label);
            if norm.is_empty() {
                return Err(TaxonomyError::InvalidTaxonomy(format!(
                    "label {label:?} is empty after normalization"
                )));
            }
            if normalized.contains(&norm) {
                return Err(TaxonomyError::InvalidTaxonomy(format!(
                    "labels {label:?} collide after normalization"
                )));
            }
            normalized.push(norm);
        }
        for (label, category) in &categories {
            if !normalized.contains(&normalize_label(label)) {
                return Err(TaxonomyError::InvalidTaxonomy(format!(
                    "category key {label:?} is not a taxonomy label"
                )));
            }
            if !CATEGORIES.contains(&category.as_str()) {
                return Err(TaxonomyError::InvalidTaxonomy(format!(
                    "unknown category {category:?} (expected one of {CATEGORIES:?})"
                )));
            }
        }
        Ok(Taxonomy { labels, normalized, categories })
    }

    pub fn from_config(config: TaxonomyConfig) -> Result<Self, TaxonomyError> {
        Taxonomy::new(config.labels, config.categories)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, TaxonomyConfig), TaxonomyError> {
        let path = path.as_ref();
        let file_err = |reason: String| TaxonomyError::ConfigFile {
            path: path.display().to_string(),
            reason,
        };
        let raw = fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let config: TaxonomyConfig =
            serde_json::from_str(&raw).map_err(|e| file_err(e.to_string()))?;
        Ok((Taxonomy::from_config(config.clone())?, config))
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn category_of(&self, label: &str) -> Option<&str> {
        self.categories.get(label).map(|s| s.as_str())
    }

    /// Canonical label whose normalization matches `raw`, if any.
    pub fn match_label(&self, raw: &str) -> Option<&str> {
        let norm = normalize_label(raw);
        self.normalized
            .iter()
            .position(|n| *n == norm)
            .map(|i| self.labels[i].as_str())
    }
}

/// Canonical form used for all label comparisons: lowercase, whitespace
/// collapsed to single spaces, trimmed, trailing ASCII punctuation stripped.
pub fn normalize_label(raw: &str) -> String {
    let lower = raw.to_lowercase();
    let mut out = lower.split_whitespace().collect::<Vec<_>>().join(" ");
    loop {
        let stripped = out
            .trim_end()
            .trim_end_matches(|c: char| c.is_ascii_punctuation())
            .trim_end()
            .to_string();
        if stripped == out {
            return out;
        }
        out = stripped;
    }
}

/// Resolve a raw backend response to a taxonomy label.
///
/// Resolution order: exact match after normalization; unique label
/// appearing as a substring of the normalized response; 1-based index into
/// the label list. The first rule yielding exactly one candidate wins;
/// substring ties fail rather than picking arbitrarily.
pub fn parse_type_label(raw: &str, taxonomy: &Taxonomy) -> Result<String, TaxonomyError> {
    let norm = normalize_label(raw);
    if let Some(label) = taxonomy.match_label(&norm) {
        return Ok(label.to_string());
    }
    let substring_hits: Vec<usize> = taxonomy
        .normalized
        .iter()
        .enumerate()
        .filter(|(_, n)| norm.contains(n.as_str()))
        .map(|(i, _)| i)
        .collect();
    if substring_hits.len() == 1 {
        return Ok(taxonomy.labels[substring_hits[0]].clone());
    }
    if let Ok(index) = norm.parse::<usize>() {
        if index >= 1 && index <= taxonomy.labels.len() {
            return Ok(taxonomy.labels[index - 1].clone());
        }
    }
    Err(TaxonomyError::UnresolvableType(raw.to_string()))
}

/// An example with its resolved question type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypedExample {
    pub example: Example,
    pub qtype: String,
}

/// Classification prompt with `{question}` / `{labels}` placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierPrompt {
    template: String,
}

impl Default for ClassifierPrompt {
    fn default() -> Self {
        ClassifierPrompt { template: DEFAULT_CLASSIFIER_TEMPLATE.to_string() }
    }
}

impl ClassifierPrompt {
    pub fn new(template: impl Into<String>) -> Self {
        ClassifierPrompt { template: template.into() }
    }

    pub fn render(&self, question: &str, taxonomy: &Taxonomy) -> String {
        let labels = taxonomy
            .labels()
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{}. {l}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        self.template.replace("{question}", question).replace("{labels}", &labels)
    }
}

/// Assign a question type to one example.
///
/// A `question_type` already on the example that matches a taxonomy label
/// is used directly with no backend call; otherwise the backend is
/// prompted and its response resolved via [`parse_type_label`].
pub fn classify_question(
    example: &Example,
    taxonomy: &Taxonomy,
    backend: &dyn ChatBackend,
    prompt: &ClassifierPrompt,
    gen: GenParams,
) -> Result<TypedExample, TaxonomyError> {
    if let Some(preset) = &example.question_type {
        if let Some(label) = taxonomy.match_label(preset) {
            return Ok(TypedExample { example: example.clone(), qtype: label.to_string() });
        }
    }
    let text = prompt.render(&example.question, taxonomy);
    let request =
        ChatRequest::new(None, vec![ChatMessage::user(vec![ContentPart::text(text)])], gen);
    let completion = backend.complete(&request)?;
    let qtype = parse_type_label(&completion.text, taxonomy)?;
    Ok(TypedExample { example: example.clone(), qtype })
}
