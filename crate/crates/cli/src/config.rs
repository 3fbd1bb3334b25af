//! Run configuration: one JSON file drives the whole pipeline, with CLI
//! flags overriding individual keys. Relative paths resolve against the
//! config file's directory so runs are reproducible from anywhere.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use rdqa_core::backend::{BackendConfig, ChatBackend, GenParams, HttpBackend, ScriptedBackend, DEFAULT_IMAGE_TOKENS};
use rdqa_core::evaluation::CacheModel;
use rdqa_core::inference::{RdFallback, Strategy, StrategyKind};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    /// Classification sidecar: JSON map example id -> question type.
    #[serde(default = "default_types")]
    pub types: PathBuf,
    #[serde(default = "default_dialogue_dir")]
    pub dialogue_dir: PathBuf,
    #[serde(default = "default_results")]
    pub results: PathBuf,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub pricing: Option<PathBuf>,
    #[serde(default = "default_cache_model")]
    pub cache_model: String,
    #[serde(default)]
    pub strategy: StrategyConfig,
    /// JSON map domain -> system prompt. Absent means built-in defaults.
    #[serde(default)]
    pub system_prompts: Option<PathBuf>,
    pub backends: BackendsConfig,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

fn default_types() -> PathBuf {
    PathBuf::from("types.json")
}
fn default_dialogue_dir() -> PathBuf {
    PathBuf::from("dialogues")
}
fn default_results() -> PathBuf {
    PathBuf::from("results.jsonl")
}
fn default_cache_model() -> String {
    "none".to_string()
}
fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    #[serde(default = "default_report_format")]
    pub format: String,
    #[serde(default = "default_report_output")]
    pub output: PathBuf,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { format: default_report_format(), output: default_report_output() }
    }
}

fn default_report_format() -> String {
    "markdown".to_string()
}
fn default_report_output() -> PathBuf {
    PathBuf::from("report.md")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    #[serde(default = "default_strategy_kind")]
    pub kind: String,
    #[serde(default = "default_frame_budget")]
    pub frame_budget: usize,
    #[serde(default)]
    pub with_timestamps: bool,
    #[serde(default = "default_separator")]
    pub separator_enabled: bool,
    #[serde(default = "default_rd_fallback")]
    pub rd_fallback: String,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: default_strategy_kind(),
            frame_budget: default_frame_budget(),
            with_timestamps: false,
            separator_enabled: default_separator(),
            rd_fallback: default_rd_fallback(),
        }
    }
}

fn default_strategy_kind() -> String {
    "zero-shot".to_string()
}
fn default_frame_budget() -> usize {
    5
}
fn default_separator() -> bool {
    true
}
fn default_rd_fallback() -> String {
    "zero-shot".to_string()
}

impl StrategyConfig {
    pub fn to_strategy(&self) -> Result<Strategy, CliError> {
        let kind = StrategyKind::parse(&self.kind).ok_or_else(|| {
            CliError::Config(format!(
                "unknown strategy kind '{}' (expected zero-shot, icl, or rd)",
                self.kind
            ))
        })?;
        if self.frame_budget < 1 {
            return Err(CliError::Config("frame_budget must be at least 1".to_string()));
        }
        Ok(Strategy {
            kind,
            with_timestamps: self.with_timestamps,
            frame_budget: self.frame_budget,
            separator_enabled: self.separator_enabled,
        })
    }

    pub fn rd_fallback(&self) -> Result<RdFallback, CliError> {
        match self.rd_fallback.as_str() {
            "zero-shot" => Ok(RdFallback::ZeroShot),
            "domain-concat" => Ok(RdFallback::DomainConcat),
            other => Err(CliError::Config(format!(
                "unknown rd_fallback '{other}' (expected zero-shot or domain-concat)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    pub solver: BackendSpec,
    /// Classifier for question types; may point at the same endpoint as
    /// the solver.
    pub classifier: BackendSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BackendSpec {
    Http(BackendConfig),
    Scripted {
        script: PathBuf,
        #[serde(default = "default_image_tokens")]
        image_token_constant: u64,
    },
}

fn default_image_tokens() -> u64 {
    DEFAULT_IMAGE_TOKENS
}

impl BackendSpec {
    pub fn build(&self) -> Result<Arc<dyn ChatBackend>, CliError> {
        match self {
            BackendSpec::Http(config) => Ok(Arc::new(
                HttpBackend::new(config.clone()).map_err(CliError::from_backend)?,
            )),
            BackendSpec::Scripted { script, image_token_constant } => Ok(Arc::new(
                ScriptedBackend::from_script_file(script)
                    .map_err(CliError::from_backend)?
                    .with_image_tokens(*image_token_constant),
            )),
        }
    }

    pub fn gen_params(&self) -> GenParams {
        match self {
            BackendSpec::Http(config) => config.gen_params(),
            BackendSpec::Scripted { .. } => GenParams::default(),
        }
    }

    pub fn image_tokens(&self) -> u64 {
        match self {
            BackendSpec::Http(config) => config.image_token_constant,
            BackendSpec::Scripted { image_token_constant, .. } => *image_token_constant,
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let BackendSpec::Scripted { script, .. } = self {
            *script = resolve(base, script);
        }
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&raw)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        config.manifest = resolve(&base, &config.manifest);
        config.taxonomy = config.taxonomy.map(|p| resolve(&base, &p));
        config.types = resolve(&base, &config.types);
        config.dialogue_dir = resolve(&base, &config.dialogue_dir);
        config.results = resolve(&base, &config.results);
        config.report.output = resolve(&base, &config.report.output);
        config.pricing = config.pricing.map(|p| resolve(&base, &p));
        config.system_prompts = config.system_prompts.map(|p| resolve(&base, &p));
        config.backends.solver.resolve_paths(&base);
        config.backends.classifier.resolve_paths(&base);
        Ok(config)
    }

    pub fn cache_model(&self) -> Result<CacheModel, CliError> {
        match self.cache_model.as_str() {
            "none" => Ok(CacheModel::None),
            "prefix-once-per-group" => Ok(CacheModel::PrefixOncePerGroup),
            other => Err(CliError::Config(format!(
                "unknown cache_model '{other}' (expected none or prefix-once-per-group)"
            ))),
        }
    }
}
