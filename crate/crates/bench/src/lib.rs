//! Synthetic data builders shared by the criterion benches.

use rdqa_core::backend::{ChatMessage, ChatRequest, ContentPart, GenParams, Usage};
use rdqa_core::corpus::{FrameRef, Label};
use rdqa_core::inference::{Prediction, PredictionRecord};

pub fn frames(n: usize) -> Vec<FrameRef> {
    (0..n).map(|i| FrameRef::new(format!("frames/{i:06}.jpg"), i as u64)).collect()
}

/// A long completion whose answer marker sits at the very end.
pub fn long_completion(paragraphs: usize) -> String {
    let mut text = String::new();
    for i in 0..paragraphs {
        text.push_str(&format!(
            "Step {i}: the hand approaches the tool, hovers briefly, then withdraws. \
             Nothing in this span shows a grasp, so the moment of contact must come later.\n"
        ));
    }
    text.push_str("Final Answer: C");
    text
}

/// A request shaped like an RD-context inference call: `turns` alternating
/// text messages followed by one image-bearing question.
pub fn rd_shaped_request(turns: usize, frames_per_question: usize) -> ChatRequest {
    let mut messages = Vec::with_capacity(turns + 1);
    for i in 0..turns {
        let text = format!(
            "Turn {i}: the frames show the operator's gloved hand moving across the bench \
             while the narration asks which instrument changes state."
        );
        let message = if i % 2 == 0 {
            ChatMessage::user(vec![ContentPart::text(text)])
        } else {
            ChatMessage::assistant(vec![ContentPart::text(text)])
        };
        messages.push(message);
    }
    let mut parts: Vec<ContentPart> =
        frames(frames_per_question).into_iter().map(ContentPart::image).collect();
    parts.push(ContentPart::text("Which instrument is lifted?\nA: probe  B: clamp  C: scissors  D: forceps"));
    messages.push(ChatMessage::user(parts));
    ChatRequest::new(Some("You are an expert.".to_string()), messages, GenParams::default())
}

/// Records spread over `groups` fingerprint groups of `per_group` each.
pub fn grouped_records(groups: usize, per_group: usize, prefix: u64) -> Vec<PredictionRecord> {
    let mut records = Vec::with_capacity(groups * per_group);
    for g in 0..groups {
        for i in 0..per_group {
            records.push(PredictionRecord {
                example_id: format!("g{g}-{i}"),
                strategy: "rd".to_string(),
                predicted: Prediction::Answer(Label::ALL[i % 4]),
                raw_text: String::new(),
                usage: Usage {
                    input_tokens: prefix + 900,
                    output_tokens: 120,
                    cached_input_tokens: 0,
                },
                context_fingerprint: format!("group-{g}"),
                context_tokens: prefix,
                note: None,
            });
        }
    }
    records
}
