//! The four pipeline commands. Stages communicate only through the files
//! declared in the run config: classification sidecar, dialogue directory,
//! results JSONL, and the rendered report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rdqa_core::backend::estimate_tokens_with;
use rdqa_core::corpus::{load_manifest, Corpus, Example};
use rdqa_core::dialogue::{build_dialogue, BuildOptions, DialogueStore};
use rdqa_core::evaluation::{
    cache_cost, close_qa_accuracy, render_report, truth_from_corpus, PricingConfig, ReportFormat,
    ReportRow,
};
use rdqa_core::inference::{read_records, run_inference, write_records, ContextAssembler, SystemPrompts};
use rdqa_core::taxonomy::{classify_question, ClassifierPrompt, Taxonomy, TypedExample};

use crate::config::RunConfig;
use crate::CliError;

/// Type assignments per example id, stored as a sorted JSON map.
type TypeSidecar = BTreeMap<String, String>;

fn read_sidecar(path: &Path) -> Result<Option<TypeSidecar>, CliError> {
    if !path.is_file() {
        return Ok(None);
    }
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let sidecar = serde_json::from_str(&raw)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(Some(sidecar))
}

fn write_sidecar(path: &Path, sidecar: &TypeSidecar) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Config(format!("{}: {e}", parent.display())))?;
    }
    let body = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    fs::write(path, body + "\n")
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn require_file(path: &Path, what: &str, hint: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingPrerequisite(format!("{what} not found: {} ({hint})", path.display())))
    }
}

fn load_corpus(config: &RunConfig) -> Result<Corpus, CliError> {
    load_manifest(&config.manifest).map_err(|e| match e {
        rdqa_core::corpus::CorpusError::ManifestNotFound(path) => {
            CliError::MissingPrerequisite(format!("manifest not found: {path}"))
        }
        other => CliError::Config(other.to_string()),
    })
}

fn load_taxonomy(config: &RunConfig) -> Result<(Taxonomy, ClassifierPrompt), CliError> {
    let path = config.taxonomy.as_ref().ok_or_else(|| {
        CliError::MissingPrerequisite("no taxonomy path in config (set \"taxonomy\")".to_string())
    })?;
    require_file(path, "taxonomy config", "supply the question-type labels")?;
    let (taxonomy, raw) = Taxonomy::load(path).map_err(|e| CliError::Config(e.to_string()))?;
    let prompt = match raw.prompt_template {
        Some(template) => ClassifierPrompt::new(template),
        None => ClassifierPrompt::default(),
    };
    Ok((taxonomy, prompt))
}

fn load_system_prompts(config: &RunConfig) -> Result<SystemPrompts, CliError> {
    match &config.system_prompts {
        None => Ok(SystemPrompts::default()),
        Some(path) => {
            require_file(path, "system prompts", "JSON map domain -> text")?;
            let raw = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let map: BTreeMap<String, String> = serde_json::from_str(&raw)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Ok(SystemPrompts::strict(map))
        }
    }
}

/// Assign question types to every support and test example, reusing the
/// sidecar as a cache so reruns make no backend calls.
pub fn cmd_classify(config: &RunConfig) -> Result<(), CliError> {
    let corpus = load_corpus(config)?;
    let (taxonomy, prompt) = load_taxonomy(config)?;
    let backend = config.backends.classifier.build()?;
    let gen = config.backends.classifier.gen_params();

    let mut sidecar = read_sidecar(&config.types)?.unwrap_or_default();
    let mut classified = 0usize;
    let mut cached = 0usize;
    for example in corpus.support.iter().chain(corpus.test.iter()) {
        if sidecar.contains_key(&example.id) {
            cached += 1;
            continue;
        }
        let typed = classify_question(example, &taxonomy, backend.as_ref(), &prompt, gen)
            .map_err(|e| CliError::classification(&example.id, e))?;
        sidecar.insert(example.id.clone(), typed.qtype);
        classified += 1;
    }
    write_sidecar(&config.types, &sidecar)?;
    println!(
        "classified {classified} questions ({cached} already cached) -> {}",
        config.types.display()
    );
    Ok(())
}

fn sidecar_type(sidecar: &TypeSidecar, example: &Example) -> Result<String, CliError> {
    sidecar.get(&example.id).cloned().ok_or_else(|| {
        CliError::MissingPrerequisite(format!(
            "no type assignment for example '{}' (rerun `rdqa classify`)",
            example.id
        ))
    })
}

/// Build one reflective dialogue per (domain, question type) group present
/// in the support set. Existing files are kept unless `force` is set.
pub fn cmd_build_dialogues(config: &RunConfig, force: bool) -> Result<(), CliError> {
    let corpus = load_corpus(config)?;
    require_file(&config.types, "classification sidecar", "run `rdqa classify` first")?;
    let sidecar = read_sidecar(&config.types)?.unwrap_or_default();
    let prompts = load_system_prompts(config)?;
    let backend = config.backends.solver.build()?;
    let strategy = config.strategy.to_strategy()?;

    let mut groups: BTreeMap<(String, String), Vec<TypedExample>> = BTreeMap::new();
    for example in &corpus.support {
        let qtype = sidecar_type(&sidecar, example)?;
        groups
            .entry((example.domain.clone(), qtype.clone()))
            .or_default()
            .push(TypedExample { example: example.clone(), qtype });
    }

    let store = DialogueStore::new(&config.dialogue_dir);
    let mut built = 0usize;
    let mut skipped = 0usize;
    for ((domain, qtype), members) in &groups {
        if store.exists(domain, qtype) && !force {
            skipped += 1;
            continue;
        }
        let options = BuildOptions {
            frame_budget: strategy.frame_budget,
            with_timestamps: strategy.with_timestamps,
            system_prompt: Some(
                prompts.resolve(domain).map_err(|e| CliError::Config(e.to_string()))?,
            ),
            fps: corpus.fps.clone(),
            gen: config.backends.solver.gen_params(),
        };
        let dialogue = build_dialogue(domain, qtype, members, backend.as_ref(), &options)
            .map_err(CliError::from_dialogue)?;
        let tokens: u64 = dialogue
            .turns
            .iter()
            .map(|t| estimate_tokens_with(&t.parts, config.backends.solver.image_tokens()))
            .sum();
        let path = store.store(&dialogue).map_err(CliError::from_dialogue)?;
        println!(
            "{}: {} turns, {} sources, ~{tokens} tokens",
            path.display(),
            dialogue.turns.len(),
            dialogue.source_ids.len()
        );
        built += 1;
    }
    println!("built {built} dialogues, kept {skipped} existing -> {}", config.dialogue_dir.display());
    Ok(())
}

/// Answer every test question under the configured strategy and write one
/// JSONL record per question.
pub fn cmd_infer(config: &RunConfig) -> Result<(), CliError> {
    use rdqa_core::inference::StrategyKind;

    let corpus = load_corpus(config)?;
    let strategy = config.strategy.to_strategy()?;
    let prompts = load_system_prompts(config)?;
    let backend = config.backends.solver.build()?;

    let mut assembler = ContextAssembler::new(strategy, prompts)
        .with_corpus(&corpus)
        .with_rd_fallback(config.strategy.rd_fallback()?)
        .with_gen(config.backends.solver.gen_params())
        .with_image_tokens(config.backends.solver.image_tokens());

    if strategy.kind == StrategyKind::Rd {
        require_file(&config.types, "classification sidecar", "run `rdqa classify` first")?;
        if !config.dialogue_dir.is_dir() {
            return Err(CliError::MissingPrerequisite(format!(
                "dialogue directory not found: {} (run `rdqa build-dialogues` first)",
                config.dialogue_dir.display()
            )));
        }
        let sidecar = read_sidecar(&config.types)?.unwrap_or_default();
        let dialogues = DialogueStore::new(&config.dialogue_dir)
            .load_all()
            .map_err(CliError::from_dialogue)?;
        assembler = assembler.with_types(sidecar).with_dialogues(dialogues);
    }

    let records = run_inference(&corpus.test, &assembler, backend.as_ref(), config.concurrency)
        .map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(parent) = config.results.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Config(format!("{}: {e}", parent.display())))?;
    }
    write_records(&config.results, &records)
        .map_err(|e| CliError::Config(format!("{}: {e}", config.results.display())))?;
    let parsed = records.iter().filter(|r| r.note.is_none()).count();
    println!(
        "answered {} questions ({} clean, {} with notes) -> {}",
        records.len(),
        parsed,
        records.len() - parsed,
        config.results.display()
    );
    Ok(())
}

/// Score one or more results files against the manifest's test answers and
/// render the report table.
pub fn cmd_report(config: &RunConfig, results: &[PathBuf]) -> Result<(), CliError> {
    let corpus = load_corpus(config)?;
    let truth = truth_from_corpus(&corpus);
    let cache_model = config.cache_model()?;
    let pricing: Option<PricingConfig> = match &config.pricing {
        Some(path) => {
            require_file(path, "pricing config", "JSON with per-token prices")?;
            Some(PricingConfig::load(path).map_err(|e| CliError::Config(e.to_string()))?)
        }
        None => None,
    };
    let format: ReportFormat = config
        .report
        .format
        .parse()
        .map_err(|e: rdqa_core::evaluation::EvalError| CliError::Config(e.to_string()))?;

    let inputs: Vec<PathBuf> = if results.is_empty() {
        vec![config.results.clone()]
    } else {
        results.to_vec()
    };
    let mut rows = Vec::with_capacity(inputs.len());
    for path in &inputs {
        require_file(path, "results file", "run `rdqa infer` first")?;
        let records = read_records(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut report =
            close_qa_accuracy(&records, &truth).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(pricing) = &pricing {
            let breakdown = cache_cost(&records, pricing, cache_model)
                .map_err(|e| CliError::Config(e.to_string()))?;
            report.cost = Some(breakdown);
        }
        let method = records
            .first()
            .map(|r| r.strategy.clone())
            .unwrap_or_else(|| path.display().to_string());
        rows.push(ReportRow { method, report });
    }

    let document = render_report(&rows, format);
    if let Some(parent) = config.report.output.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Config(format!("{}: {e}", parent.display())))?;
    }
    fs::write(&config.report.output, &document)
        .map_err(|e| CliError::Config(format!("{}: {e}", config.report.output.display())))?;
    print!("{document}");
    println!("report written to {}", config.report.output.display());
    Ok(())
}
