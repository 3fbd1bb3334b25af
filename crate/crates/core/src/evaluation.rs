//! Scoring, token aggregation, and prefix-cache cost modeling.
//!
//! Accuracy is the fraction of multiple-choice questions answered with the
//! correct letter; unparsed predictions never score. The cache model
//! charges each distinct context prefix in full once and at the cached
//! rate for every repeat, which is how providers bill static context
//! shared across requests.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Label};
use crate::inference::{Prediction, PredictionRecord};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("record references unknown example id '{0}'")]
    UnknownExampleId(String),
    #[error("no records to evaluate")]
    EmptyResults,
    #[error("invalid pricing: {0}")]
    InvalidPricing(String),
    #[error("unsupported report format: {0}")]
    UnsupportedFormat(String),
    #[error("{path}: {reason}")]
    ConfigFile { path: String, reason: String },
}

/// Ground truth for one test example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthEntry {
    pub domain: String,
    pub answer: Label,
}

/// Truth map from a corpus's test set. Examples without answers are
/// skipped (they cannot be scored).
pub fn truth_from_corpus(corpus: &Corpus) -> BTreeMap<String, TruthEntry> {
    corpus
        .test
        .iter()
        .filter_map(|e| {
            e.answer.map(|answer| {
                (e.id.clone(), TruthEntry { domain: e.domain.clone(), answer })
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupScore {
    pub n: u64,
    pub correct: u64,
    pub accuracy: f64,
}

impl GroupScore {
    fn from_counts(correct: u64, n: u64) -> Self {
        GroupScore { n, correct, accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenTotals {
    pub input: u64,
    pub output: u64,
    pub cached_input: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Cost under the selected cache model.
    pub total: f64,
    /// Cost with every input token at the full rate.
    pub uncached_total: f64,
    /// `1 - total / uncached_total` (0 when nothing is cacheable).
    pub cached_savings_fraction: f64,
    /// Prefix tokens the model charged at the cached rate.
    pub modeled_cached_tokens: u64,
}

/// Per-domain and overall accuracy plus aggregate token usage and cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_domain: BTreeMap<String, GroupScore>,
    pub overall: GroupScore,
    pub tokens: TokenTotals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostBreakdown>,
}

/// Round half-up to three decimals, the precision accuracies are
/// reported at.
pub fn round3(x: f64) -> f64 {
    (x * 1000.0 + 0.5).floor() / 1000.0
}

/// Score predictions against ground truth.
///
/// A record is correct iff its predicted label equals the truth label;
/// `Unparsed` never scores. Overall counts are the exact sums of the
/// per-domain counts.
pub fn close_qa_accuracy(
    records: &[PredictionRecord],
    truth: &BTreeMap<String, TruthEntry>,
) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let mut per_domain: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    let mut tokens = TokenTotals::default();
    for record in records {
        let entry = truth
            .get(&record.example_id)
            .ok_or_else(|| EvalError::UnknownExampleId(record.example_id.clone()))?;
        let counts = per_domain.entry(entry.domain.clone()).or_default();
        counts.1 += 1;
        if record.predicted == Prediction::Answer(entry.answer) {
            counts.0 += 1;
        }
        tokens.input += record.usage.input_tokens;
        tokens.output += record.usage.output_tokens;
        tokens.cached_input += record.usage.cached_input_tokens;
    }
    let (correct, n) = per_domain
        .values()
        .fold((0, 0), |(c, n), (gc, gn)| (c + gc, n + gn));
    Ok(EvalReport {
        per_domain: per_domain
            .into_iter()
            .map(|(domain, (c, n))| (domain, GroupScore::from_counts(c, n)))
            .collect(),
        overall: GroupScore::from_counts(correct, n),
        tokens,
        cost: None,
    })
}

/// Per-token prices. The cached rate never exceeds the full input rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingConfig {
    pub price_per_input_token: f64,
    pub price_per_output_token: f64,
    pub price_per_cached_input_token: f64,
}

impl PricingConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let PricingConfig {
            price_per_input_token: p_in,
            price_per_output_token: p_out,
            price_per_cached_input_token: p_cached,
        } = *self;
        if !(p_in >= 0.0 && p_out >= 0.0 && p_cached >= 0.0) {
            return Err(EvalError::InvalidPricing("prices must be non-negative".to_string()));
        }
        if p_cached > p_in {
            return Err(EvalError::InvalidPricing(format!(
                "cached input price {p_cached} exceeds input price {p_in}"
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let file_err = |reason: String| EvalError::ConfigFile {
            path: path.display().to_string(),
            reason,
        };
        let raw = fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let pricing: PricingConfig =
            serde_json::from_str(&raw).map_err(|e| file_err(e.to_string()))?;
        pricing.validate()?;
        Ok(pricing)
    }
}

/// How shared context prefixes are billed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CacheModel {
    /// Every input token at the full rate.
    None,
    /// Per distinct context fingerprint, the prefix is charged in full
    /// once and at the cached rate for each of the remaining occurrences;
    /// per-request remainders always pay the full rate.
    PrefixOncePerGroup,
}

/// Cost of a record set under a cache model.
///
/// Group prefix sizes come from the records' `context_tokens`; a record
/// reporting fewer input tokens than its prefix caps the cacheable part at
/// what it actually used, so the uncached total always equals plain
/// `sum(input) * p_in` billing.
pub fn cache_cost(
    records: &[PredictionRecord],
    pricing: &PricingConfig,
    model: CacheModel,
) -> Result<CostBreakdown, EvalError> {
    pricing.validate()?;
    let p_in = pricing.price_per_input_token;
    let p_out = pricing.price_per_output_token;
    let p_cached = pricing.price_per_cached_input_token;

    let output_cost: f64 = records.iter().map(|r| r.usage.output_tokens as f64 * p_out).sum();

    match model {
        CacheModel::None => {
            let input_cost: f64 =
                records.iter().map(|r| r.usage.input_tokens as f64 * p_in).sum();
            let total = input_cost + output_cost;
            Ok(CostBreakdown {
                total,
                uncached_total: total,
                cached_savings_fraction: 0.0,
                modeled_cached_tokens: 0,
            })
        }
        CacheModel::PrefixOncePerGroup => {
            let mut seen: BTreeMap<&str, u64> = BTreeMap::new();
            let mut cached_total = 0.0;
            let mut uncached_total = 0.0;
            let mut modeled_cached_tokens = 0u64;
            for record in records {
                let input = record.usage.input_tokens;
                // Cacheable prefix capped by what the request actually used.
                let prefix = record.context_tokens.min(input);
                let remainder = input - prefix;
                let first = !seen.contains_key(record.context_fingerprint.as_str());
                seen.entry(record.context_fingerprint.as_str()).or_insert(prefix);
                let prefix_rate = if first { p_in } else { p_cached };
                // The uncached side mirrors the same expression with the
                // full rate, so p_cached == p_in gives exact equality.
                cached_total += remainder as f64 * p_in + prefix as f64 * prefix_rate;
                uncached_total += remainder as f64 * p_in + prefix as f64 * p_in;
                if !first {
                    modeled_cached_tokens += prefix;
                }
            }
            cached_total += output_cost;
            uncached_total += output_cost;
            let cached_savings_fraction = if uncached_total > 0.0 {
                1.0 - cached_total / uncached_total
            } else {
                0.0
            };
            Ok(CostBreakdown {
                total: cached_total,
                uncached_total,
                cached_savings_fraction,
                modeled_cached_tokens,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(EvalError::UnsupportedFormat(other.to_string())),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Markdown => "markdown",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        })
    }
}

/// One rendered table row: a method label and its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub report: EvalReport,
}

fn cached_tokens_cell(report: &EvalReport) -> u64 {
    match &report.cost {
        Some(cost) => cost.modeled_cached_tokens,
        None => report.tokens.cached_input,
    }
}

/// Render rows in the given order as a deterministic document.
///
/// Columns: Method, one per domain (sorted), Overall, Input Tokens,
/// Cached Tokens, Cost. Accuracies print at three decimals (half-up).
pub fn render_report(rows: &[ReportRow], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(rows).expect("report serializes") + "\n"
        }
        ReportFormat::Markdown | ReportFormat::Csv => {
            let domains: Vec<String> = rows
                .iter()
                .flat_map(|r| r.report.per_domain.keys().cloned())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            let mut header = vec!["Method".to_string()];
            header.extend(domains.iter().cloned());
            header.extend(
                ["Overall", "Input Tokens", "Cached Tokens", "Cost"].map(String::from),
            );
            let mut body: Vec<Vec<String>> = Vec::with_capacity(rows.len());
            for row in rows {
                let mut cells = vec![row.method.clone()];
                for domain in &domains {
                    cells.push(match row.report.per_domain.get(domain) {
                        Some(score) => format!("{:.3}", round3(score.accuracy)),
                        None => "-".to_string(),
                    });
                }
                cells.push(format!("{:.3}", round3(row.report.overall.accuracy)));
                cells.push(row.report.tokens.input.to_string());
                cells.push(cached_tokens_cell(&row.report).to_string());
                cells.push(match &row.report.cost {
                    Some(cost) => format!("{:.4}", cost.total),
                    None => "-".to_string(),
                });
                body.push(cells);
            }
            match format {
                ReportFormat::Markdown => {
                    let mut out = String::new();
                    out.push_str(&format!("| {} |\n", header.join(" | ")));
                    out.push_str(&format!("|{}\n", " --- |".repeat(header.len())));
                    for cells in body {
                        out.push_str(&format!("| {} |\n", cells.join(" | ")));
                    }
                    out
                }
                ReportFormat::Csv => {
                    let mut out = String::new();
                    out.push_str(&header.join(","));
                    out.push('\n');
                    for cells in body {
                        out.push_str(&cells.join(","));
                        out.push('\n');
                    }
                    out
                }
                ReportFormat::Json => unreachable!(),
            }
        }
    }
}
