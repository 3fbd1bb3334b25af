//! Shared fixtures for the CLI integration and acceptance tests: a small
//! three-domain corpus, taxonomy, pricing, and run-config writers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;

pub const BIN: &str = env!("CARGO_BIN_EXE_rdqa");

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn rdqa")
}

pub fn frames(id: &str, count: u64) -> serde_json::Value {
    json!((0..count)
        .map(|i| json!({"uri": format!("{id}-{i}.jpg"), "index": i}))
        .collect::<Vec<_>>())
}

fn example(
    id: &str,
    domain: &str,
    video: &str,
    n_frames: u64,
    question: &str,
    answer: Option<&str>,
    qtype: Option<&str>,
) -> serde_json::Value {
    let mut value = json!({
        "id": id,
        "domain": domain,
        "video_id": video,
        "frames": frames(id, n_frames),
        "question": question,
        "choices": {"A": "first", "B": "second", "C": "third", "D": "fourth"},
    });
    if let Some(answer) = answer {
        value["answer"] = json!(answer);
    }
    if let Some(qtype) = qtype {
        value["question_type"] = json!(qtype);
    }
    value
}

/// Three domains, four support examples (three (domain, type) groups), and
/// three answered test questions. All question types are preset so
/// `classify` needs no backend calls.
pub fn toy_manifest() -> serde_json::Value {
    let videos = ["v-s1", "v-s2", "v-i1", "v-a1", "v-ts1", "v-ti1", "v-ta1"];
    let fps: BTreeMap<&str, f64> = videos.iter().map(|v| (*v, 2.0)).collect();
    json!({
        "domains": ["surgery", "industry", "animal"],
        "fps": fps,
        "support": [
            example("sup-surgery-1", "surgery", "v-s1", 4,
                "Which instrument is used to cut?", Some("B"), Some("tool identification")),
            example("sup-surgery-2", "surgery", "v-s2", 3,
                "Which instrument holds the tissue?", Some("D"), Some("tool identification")),
            example("sup-industry-1", "industry", "v-i1", 6,
                "When is the bolt tightened?", Some("A"), Some("action temporal localization")),
            example("sup-animal-1", "animal", "v-a1", 5,
                "How many birds land on the feeder?", Some("C"), Some("counting")),
        ],
        "test": [
            example("t-surgery-1", "surgery", "v-ts1", 5,
                "Which instrument is passed?", Some("C"), Some("tool identification")),
            example("t-industry-1", "industry", "v-ti1", 7,
                "When is the panel lifted?", Some("A"), Some("action temporal localization")),
            example("t-animal-1", "animal", "v-ta1", 4,
                "How many sheep cross the road?", Some("B"), Some("counting")),
        ],
    })
}

pub fn toy_taxonomy() -> serde_json::Value {
    json!({
        "labels": ["tool identification", "action temporal localization", "counting"],
        "categories": {
            "tool identification": "identification",
            "action temporal localization": "localization",
            "counting": "counting"
        }
    })
}

pub fn toy_pricing() -> serde_json::Value {
    json!({
        "price_per_input_token": 1.0e-6,
        "price_per_output_token": 2.0e-6,
        "price_per_cached_input_token": 2.5e-7
    })
}

/// FIFO script for `build-dialogues` over the toy corpus. Groups build in
/// sorted (domain, qtype) order (animal, industry, surgery) with two
/// completions (answer, reflection) per support example.
pub fn toy_build_script() -> serde_json::Value {
    json!([
        // animal / counting (sup-animal-1, truth C): wrong answer.
        "I count two birds.\nFinal Answer: A",
        "Three birds land in total; the last arrives near the end, which I missed.",
        // industry / action temporal localization (sup-industry-1, truth A): correct.
        "Final Answer: A",
        "The wrench stops turning right at the start, so the bolt is tightened early.",
        // surgery / tool identification (sup-surgery-1, truth B): correct.
        "Final Answer: B",
        "The scissors close over the tissue edge, confirming the cut.",
        // surgery / tool identification (sup-surgery-2, truth D): wrong.
        "It looks like the clamp.\nFinal Answer: A",
        "The forceps grip the tissue while the other hand works; the clamp never touches it."
    ])
}

/// Write the toy workspace (manifest, taxonomy, pricing, build script,
/// empty classifier script) plus a run config with the given strategy and
/// solver script. Returns the config path.
#[allow(clippy::too_many_arguments)]
pub fn write_workspace(
    dir: &Path,
    config_name: &str,
    strategy_kind: &str,
    with_timestamps: bool,
    solver_script_name: &str,
    results_name: &str,
    report_name: &str,
    concurrency: usize,
) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let write = |name: &str, value: &serde_json::Value| {
        std::fs::write(dir.join(name), serde_json::to_string_pretty(value).unwrap()).unwrap();
    };
    write("manifest.json", &toy_manifest());
    write("taxonomy.json", &toy_taxonomy());
    write("pricing.json", &toy_pricing());
    write("build-script.json", &toy_build_script());
    write("classifier-script.json", &json!([]));
    if !dir.join(solver_script_name).exists() {
        write(solver_script_name, &json!([]));
    }

    let config = json!({
        "manifest": "manifest.json",
        "taxonomy": "taxonomy.json",
        "types": "types.json",
        "dialogue_dir": "dialogues",
        "results": results_name,
        "report": {"format": "markdown", "output": report_name},
        "pricing": "pricing.json",
        "cache_model": "prefix-once-per-group",
        "strategy": {
            "kind": strategy_kind,
            "frame_budget": 5,
            "with_timestamps": with_timestamps,
            "separator_enabled": true
        },
        "backends": {
            "solver": {"kind": "scripted", "script": solver_script_name},
            "classifier": {"kind": "scripted", "script": "classifier-script.json"}
        },
        "concurrency": concurrency
    });
    let config_path = dir.join(config_name);
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    config_path
}
