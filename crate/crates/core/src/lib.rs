//! Harness for adapting chat-completion vision-language backends to
//! specialized video-QA domains at inference time.
//!
//! The pipeline pre-constructs reflective dialogues: multi-turn
//! Teacher/Solver conversations over a labeled support set, one per
//! (domain, question type). Each dialogue is prepended as static context
//! before its test questions. Baseline strategies (zero-shot, plain
//! in-context examples), multiple-choice evaluation, and prefix-cache
//! cost accounting round out the harness.
//!
//! Module map:
//! - [`corpus`]: manifest loading, frame sampling, timestamp annotation
//! - [`taxonomy`]: question-type labels and classification
//! - [`dialogue`]: reflective dialogue construction and persistence
//! - [`backend`]: chat-completion backends (HTTP and scripted)
//! - [`inference`]: context assembly, answer extraction, batched runs
//! - [`evaluation`]: accuracy, token totals, and cache cost modeling

pub mod backend;
pub mod corpus;
pub mod dialogue;
pub mod evaluation;
pub mod inference;
pub mod taxonomy;

pub use backend::{
    conversation_fingerprint, estimate_tokens, BackendConfig, BackendError, ChatBackend,
    ChatMessage, ChatRequest, Completion, ContentPart, GenParams, HttpBackend, Role,
    ScriptedBackend, Usage,
};
pub use corpus::{
    annotate_timestamps, load_manifest, sample_frames, save_manifest, Choices, Corpus,
    CorpusError, Example, FrameRef, Label,
};
pub use dialogue::{
    build_dialogue, feedback_message, BuildOptions, DialogueError, DialogueStore,
    ReflectiveDialogue, SolverOutcome, Speaker, Turn,
};
pub use evaluation::{
    cache_cost, close_qa_accuracy, render_report, round3, truth_from_corpus, CacheModel,
    CostBreakdown, EvalError, EvalReport, GroupScore, PricingConfig, ReportFormat, ReportRow,
    TokenTotals, TruthEntry,
};
pub use inference::{
    extract_answer, read_records, run_inference, write_records, ContextAssembler,
    InferenceError, Prediction, PredictionRecord, RdFallback, Strategy, StrategyKind,
    SystemPrompts, ANSWER_INSTRUCTION, SEPARATOR_TEXT,
};
pub use taxonomy::{
    classify_question, normalize_label, parse_type_label, ClassifierPrompt, Taxonomy,
    TaxonomyConfig, TaxonomyError, TypedExample,
};
