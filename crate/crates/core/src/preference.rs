//! Preference-tuple construction: classification prompts, strict completion
//! parsing, the size-based chosen/rejected assignment, model-agreement
//! verification, two-judge consensus filtering, and dataset export.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::claims::Label;
use crate::client::{ChatClient, ChatRequest, InferenceParams};
use crate::error::{Error, Result};
use crate::io;

/// Instruction block of the classification prompt. The labels' definitions
/// ride along in every request.
pub const CLASSIFICATION_INSTRUCTIONS: [&str; 6] = [
    "You will be given a document and a claim. Determine whether the claim is 'GROUNDED' or 'HALLUCINATED' based on the document.",
    "A 'GROUNDED' claim is factually accurate and fully supported by the information provided in the document. It should be directly verifiable from the document.",
    "A 'HALLUCINATED' claim is either:",
    "  - Intrinsically incorrect: It contradicts the information provided in the document, or",
    "  - Extrinsically incorrect: It includes information that cannot be verified within the document and requires external knowledge to assess its accuracy.",
    "Return the classification as the answer (i.e., GROUNDED or HALLUCINATED). Include justification.",
];

#[derive(Serialize)]
struct AnswerSlot {
    #[serde(rename = "CLASSIFICATION")]
    classification: &'static str,
    #[serde(rename = "JUSTIFICATION")]
    justification: &'static str,
}

#[derive(Serialize)]
struct ClassificationPromptBody<'a> {
    instructions: &'static [&'static str; 6],
    document: &'a str,
    claim: &'a str,
    answer: AnswerSlot,
}

/// A rendered classification prompt plus the raw pieces it was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationPrompt {
    pub document: String,
    pub claim: String,
    pub rendered: String,
}

/// Render the JSON classification prompt. Byte-stable; empty inputs are an
/// error.
pub fn build_classification_prompt(doc_text: &str, claim_text: &str) -> Result<ClassificationPrompt> {
    if doc_text.trim().is_empty() {
        return Err(Error::InvalidInput("classification prompt needs a document".into()));
    }
    if claim_text.trim().is_empty() {
        return Err(Error::InvalidInput("classification prompt needs a claim".into()));
    }
    let rendered = serde_json::to_string_pretty(&ClassificationPromptBody {
        instructions: &CLASSIFICATION_INSTRUCTIONS,
        document: doc_text,
        claim: claim_text,
        answer: AnswerSlot {
            classification: "",
            justification: "",
        },
    })?;
    Ok(ClassificationPrompt {
        document: doc_text.to_string(),
        claim: claim_text.to_string(),
        rendered,
    })
}

/// A parsed model response. `predicted` is `None` when the response does
/// not satisfy the strict output contract: an optional leading
/// `<think>...</think>` block followed by a single JSON object whose keys
/// are exactly `CLASSIFICATION` and `JUSTIFICATION`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    #[serde(with = "predicted_serde")]
    pub predicted: Option<Label>,
    pub justification: String,
    pub reasoning_trace: String,
    pub raw: String,
}

mod predicted_serde {
    use super::Label;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Label>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(Label::Grounded) => s.serialize_str("grounded"),
            Some(Label::Hallucinated) => s.serialize_str("hallucinated"),
            None => s.serialize_str("unparseable"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Label>, D::Error> {
        match String::deserialize(d)?.as_str() {
            "grounded" => Ok(Some(Label::Grounded)),
            "hallucinated" => Ok(Some(Label::Hallucinated)),
            "unparseable" => Ok(None),
            other => Err(serde::de::Error::custom(format!("unknown label {other}"))),
        }
    }
}

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";

/// Split an optional leading think block off a response. Returns
/// (trace, remainder); a dangling `<think>` swallows everything into the
/// remainder so JSON parsing fails downstream.
fn split_think_block(raw: &str) -> (String, &str) {
    let trimmed = raw.trim_start();
    if !trimmed.starts_with(THINK_OPEN) {
        return (String::new(), raw);
    }
    let body_start = THINK_OPEN.len();
    let mut depth = 1usize;
    let mut idx = body_start;
    let bytes = trimmed.as_bytes();
    while idx < bytes.len() {
        if trimmed[idx..].starts_with(THINK_OPEN) {
            depth += 1;
            idx += THINK_OPEN.len();
        } else if trimmed[idx..].starts_with(THINK_CLOSE) {
            depth -= 1;
            if depth == 0 {
                let trace = trimmed[body_start..idx].to_string();
                let rest = &trimmed[idx + THINK_CLOSE.len()..];
                return (trace, rest);
            }
            idx += THINK_CLOSE.len();
        } else {
            // advance one character, respecting UTF-8 boundaries
            idx += trimmed[idx..].chars().next().map_or(1, |c| c.len_utf8());
        }
    }
    (String::new(), raw)
}

fn parse_label_value(value: &serde_json::Value) -> Option<Label> {
    let s = value.as_str()?;
    if s.eq_ignore_ascii_case("grounded") {
        Some(Label::Grounded)
    } else if s.eq_ignore_ascii_case("hallucinated") {
        Some(Label::Hallucinated)
    } else {
        None
    }
}

/// Parse a raw model response into a [`Completion`]. Never fails:
/// violations of the output contract yield `predicted = None`.
pub fn parse_completion(raw: &str) -> Completion {
    let unparseable = |trace: String| Completion {
        predicted: None,
        justification: String::new(),
        reasoning_trace: trace,
        raw: raw.to_string(),
    };

    let (trace, rest) = split_think_block(raw);
    let rest = rest.trim();
    let value: serde_json::Value = match serde_json::from_str(rest) {
        Ok(v) => v,
        Err(_) => return unparseable(trace),
    };
    let obj = match value.as_object() {
        Some(o) => o,
        None => return unparseable(trace),
    };
    // keys must be exactly CLASSIFICATION and JUSTIFICATION
    if obj.len() != 2 || !obj.contains_key("CLASSIFICATION") || !obj.contains_key("JUSTIFICATION") {
        return unparseable(trace);
    }
    let predicted = match parse_label_value(&obj["CLASSIFICATION"]) {
        Some(label) => label,
        None => return unparseable(trace),
    };
    let justification = match obj["JUSTIFICATION"].as_str() {
        Some(j) => j.to_string(),
        None => return unparseable(trace),
    };
    Completion {
        predicted: Some(predicted),
        justification,
        reasoning_trace: trace,
        raw: raw.to_string(),
    }
}

/// Render a completion in the wire shape `parse_completion` accepts: the
/// think block (when a trace is present) followed by the answer object.
pub fn render_completion(label: Label, justification: &str, trace: &str) -> String {
    let answer = serde_json::json!({
        "CLASSIFICATION": match label {
            Label::Grounded => "GROUNDED",
            Label::Hallucinated => "HALLUCINATED",
        },
        "JUSTIFICATION": justification,
    });
    let answer = serde_json::to_string(&answer).expect("completion serializes");
    if trace.is_empty() {
        answer
    } else {
        format!("{THINK_OPEN}{trace}{THINK_CLOSE}\n{answer}")
    }
}

/// Which side a judge ended up picking, mapped back from the blinded
/// presentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgePick {
    Chosen,
    Rejected,
    Invalid,
    Unavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresentationOrder {
    ChosenFirst,
    RejectedFirst,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterAudit {
    pub agreement_passed: bool,
    pub judge1_pick: Option<JudgePick>,
    pub judge2_pick: Option<JudgePick>,
    pub consensus_passed: bool,
    pub presentation_order: Option<PresentationOrder>,
}

/// One preference tuple. `chosen` always holds the large generator's
/// completion and `rejected` the small generator's, regardless of content
/// or parse success.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreferenceTuple {
    pub doc_id: String,
    pub prompt: ClassificationPrompt,
    pub chosen: Completion,
    pub rejected: Completion,
    pub synthetic_label: Label,
    pub audit: FilterAudit,
}

/// Run the same prompt through both generators; the large model's output
/// becomes `chosen`, the small model's `rejected`. Both completions may be
/// unparseable at this stage.
#[allow(clippy::too_many_arguments)]
pub fn generate_pair(
    prompt: &ClassificationPrompt,
    synthetic_label: Label,
    doc_id: &str,
    client_large: &dyn ChatClient,
    params_large: &InferenceParams,
    client_small: &dyn ChatClient,
    params_small: &InferenceParams,
) -> std::result::Result<PreferenceTuple, String> {
    let req_large = ChatRequest::user("pg_large", prompt.rendered.clone(), params_large.clone());
    let req_small = ChatRequest::user("pg_small", prompt.rendered.clone(), params_small.clone());
    let (large, small) = rayon::join(
        || client_large.complete(&req_large),
        || client_small.complete(&req_small),
    );
    let large = large.map_err(|e| format!("large generator failed: {}", e.kind))?;
    let small = small.map_err(|e| format!("small generator failed: {}", e.kind))?;
    Ok(PreferenceTuple {
        doc_id: doc_id.to_string(),
        prompt: prompt.clone(),
        chosen: parse_completion(&large.content),
        rejected: parse_completion(&small.content),
        synthetic_label,
        audit: FilterAudit::default(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementOutcome {
    Keep,
    DropLabelMismatch,
    DropUnparseableChosen,
}

/// Keep the tuple iff the chosen completion parses and its label matches
/// the synthetic label from claim generation.
pub fn agreement_verify(tuple: &PreferenceTuple) -> AgreementOutcome {
    match tuple.chosen.predicted {
        None => AgreementOutcome::DropUnparseableChosen,
        Some(label) if label == tuple.synthetic_label => AgreementOutcome::Keep,
        Some(_) => AgreementOutcome::DropLabelMismatch,
    }
}

pub const CONSENSUS_INSTRUCTIONS: [&str; 3] = [
    "You will be given a document and a claim, along with two responses (RESPONSE_A and RESPONSE_B).",
    "Determine which response is better based on classification correctness, thinking coherence and clarity, and justification quality.",
    "Return your answer as either 'RESPONSE_A' or 'RESPONSE_B', without any justification.",
];

#[derive(Serialize)]
struct ConsensusPromptBody<'a> {
    instructions: &'static [&'static str; 3],
    examples: &'a serde_json::Value,
    document: &'a str,
    claim: &'a str,
    #[serde(rename = "RESPONSE_A")]
    response_a: &'a str,
    #[serde(rename = "RESPONSE_B")]
    response_b: &'a str,
    best_response: &'static str,
}

/// Few-shot examples for the consensus prompt, shipped as an editable
/// fixture file.
pub fn builtin_fewshot_examples() -> serde_json::Value {
    serde_json::from_str(include_str!("../data/consensus_fewshot.json"))
        .expect("bundled few-shot examples are valid")
}

pub fn load_fewshot_examples(path: &Path) -> Result<serde_json::Value> {
    io::read_json(path)
}

/// Render the blinded pairwise judging prompt. The judge is never told
/// which response is the chosen one.
pub fn build_consensus_prompt(
    document: &str,
    claim: &str,
    response_a: &str,
    response_b: &str,
    examples: &serde_json::Value,
) -> String {
    serde_json::to_string_pretty(&ConsensusPromptBody {
        instructions: &CONSENSUS_INSTRUCTIONS,
        examples,
        document,
        claim,
        response_a,
        response_b,
        best_response: "",
    })
    .expect("consensus prompt serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    A,
    B,
}

fn parse_judge_pick(raw: &str) -> Option<Side> {
    let cleaned = raw.trim().trim_matches(|c| c == '"' || c == '\'').trim();
    if cleaned.eq_ignore_ascii_case("RESPONSE_A") {
        Some(Side::A)
    } else if cleaned.eq_ignore_ascii_case("RESPONSE_B") {
        Some(Side::B)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusDrop {
    JudgesSplit,
    BothPickedRejected,
    InvalidJudgeOutput,
    JudgeUnavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConsensusResult {
    pub keep: bool,
    pub drop_reason: Option<ConsensusDrop>,
    pub judge1: JudgePick,
    pub judge2: JudgePick,
    pub order: PresentationOrder,
}

/// Present both completions to two judges in a seeded random order and
/// keep the tuple only when both picks map back to the chosen completion.
#[allow(clippy::too_many_arguments)]
pub fn consensus_filter(
    tuple: &PreferenceTuple,
    judge1: &dyn ChatClient,
    params1: &InferenceParams,
    judge2: &dyn ChatClient,
    params2: &InferenceParams,
    examples: &serde_json::Value,
    rng: &mut ChaCha8Rng,
) -> ConsensusResult {
    let order = if rng.random_bool(0.5) {
        PresentationOrder::ChosenFirst
    } else {
        PresentationOrder::RejectedFirst
    };
    consensus_filter_with_order(tuple, judge1, params1, judge2, params2, examples, order)
}

/// Same as [`consensus_filter`] with an explicit presentation order;
/// used directly by tests that assert order invariance.
#[allow(clippy::too_many_arguments)]
pub fn consensus_filter_with_order(
    tuple: &PreferenceTuple,
    judge1: &dyn ChatClient,
    params1: &InferenceParams,
    judge2: &dyn ChatClient,
    params2: &InferenceParams,
    examples: &serde_json::Value,
    order: PresentationOrder,
) -> ConsensusResult {
    let (first, second) = match order {
        PresentationOrder::ChosenFirst => (&tuple.chosen.raw, &tuple.rejected.raw),
        PresentationOrder::RejectedFirst => (&tuple.rejected.raw, &tuple.chosen.raw),
    };
    let prompt = build_consensus_prompt(&tuple.prompt.document, &tuple.prompt.claim, first, second, examples);

    let ask = |client: &dyn ChatClient, params: &InferenceParams, slot: &str| -> JudgePick {
        let request = ChatRequest::user(slot, prompt.clone(), params.clone());
        match client.complete(&request) {
            Err(_) => JudgePick::Unavailable,
            Ok(resp) => match parse_judge_pick(&resp.content) {
                None => JudgePick::Invalid,
                Some(side) => {
                    let picked_first = side == Side::A;
                    let picked_chosen = match order {
                        PresentationOrder::ChosenFirst => picked_first,
                        PresentationOrder::RejectedFirst => !picked_first,
                    };
                    if picked_chosen {
                        JudgePick::Chosen
                    } else {
                        JudgePick::Rejected
                    }
                }
            },
        }
    };

    let (pick1, pick2) = rayon::join(
        || ask(judge1, params1, "ie1"),
        || ask(judge2, params2, "ie2"),
    );

    let drop_reason = if pick1 == JudgePick::Unavailable || pick2 == JudgePick::Unavailable {
        Some(ConsensusDrop::JudgeUnavailable)
    } else if pick1 == JudgePick::Invalid || pick2 == JudgePick::Invalid {
        Some(ConsensusDrop::InvalidJudgeOutput)
    } else if pick1 == JudgePick::Chosen && pick2 == JudgePick::Chosen {
        None
    } else if pick1 == JudgePick::Rejected && pick2 == JudgePick::Rejected {
        Some(ConsensusDrop::BothPickedRejected)
    } else {
        Some(ConsensusDrop::JudgesSplit)
    };

    ConsensusResult {
        keep: drop_reason.is_none(),
        drop_reason,
        judge1: pick1,
        judge2: pick2,
        order,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportMessage {
    pub role: String,
    pub content: String,
}

/// One exported preference record: the prompt string and a single
/// assistant message per side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportRecord {
    pub prompt: String,
    pub chosen: Vec<ExportMessage>,
    pub rejected: Vec<ExportMessage>,
}

impl From<&PreferenceTuple> for ExportRecord {
    fn from(tuple: &PreferenceTuple) -> Self {
        let msg = |completion: &Completion| ExportMessage {
            role: "assistant".into(),
            content: completion.raw.clone(),
        };
        ExportRecord {
            prompt: tuple.prompt.rendered.clone(),
            chosen: vec![msg(&tuple.chosen)],
            rejected: vec![msg(&tuple.rejected)],
        }
    }
}

/// Write the filtered tuples in the preference-dataset layout, one record
/// per line. A tuple that did not pass both filters is an internal bug and
/// aborts the export.
pub fn export_preference_dataset(tuples: &[PreferenceTuple], path: &Path) -> Result<usize> {
    for tuple in tuples {
        if !(tuple.audit.agreement_passed && tuple.audit.consensus_passed) {
            return Err(Error::InvariantBreach(format!(
                "tuple for doc {} reached export without passing both filters",
                tuple.doc_id
            )));
        }
    }
    if tuples.is_empty() {
        log::warn!("exporting an empty preference dataset to {}", path.display());
    }
    let records: Vec<ExportRecord> = tuples.iter().map(ExportRecord::from).collect();
    io::write_jsonl(path, &records)?;
    Ok(records.len())
}

/// Read an exported preference file back into records.
pub fn read_preference_export(path: &Path) -> Result<Vec<ExportRecord>> {
    io::read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{MockBehavior, MockClient, Mode};
    use proptest::prelude::*;

    fn think_params() -> InferenceParams {
        InferenceParams::preset(Mode::Think)
    }

    #[test]
    fn prompt_contains_required_phrases_and_is_stable() {
        let p = build_classification_prompt("Document body.", "Claim body.").unwrap();
        assert!(p.rendered.contains("Return the classification as the answer"));
        assert!(p.rendered.contains("Document body."));
        assert!(p.rendered.contains("Claim body."));
        assert!(p.rendered.contains("\"CLASSIFICATION\": \"\""));
        assert!(p.rendered.contains("\"JUSTIFICATION\": \"\""));
        let q = build_classification_prompt("Document body.", "Claim body.").unwrap();
        assert_eq!(p.rendered, q.rendered);
    }

    #[test]
    fn prompt_rejects_empty_inputs() {
        assert!(build_classification_prompt("", "claim").is_err());
        assert!(build_classification_prompt("doc", "  ").is_err());
    }

    #[test]
    fn prompt_embeds_each_piece_exactly_once() {
        let p = build_classification_prompt("UNIQUE_DOC_TOKEN body", "UNIQUE_CLAIM_TOKEN body")
            .unwrap();
        assert_eq!(p.rendered.matches("UNIQUE_DOC_TOKEN").count(), 1);
        assert_eq!(p.rendered.matches("UNIQUE_CLAIM_TOKEN").count(), 1);
        assert_eq!(
            p.rendered.matches(CLASSIFICATION_INSTRUCTIONS[0]).count(),
            1
        );
    }

    #[test]
    fn parse_think_block_and_json() {
        let raw = "<think>reasoning here</think>{\"CLASSIFICATION\":\"GROUNDED\",\"JUSTIFICATION\":\"solid\"}";
        let c = parse_completion(raw);
        assert_eq!(c.predicted, Some(Label::Grounded));
        assert_eq!(c.justification, "solid");
        assert_eq!(c.reasoning_trace, "reasoning here");
        assert_eq!(c.raw, raw);
    }

    #[test]
    fn parse_without_think_block_has_empty_trace() {
        let c = parse_completion("{\"CLASSIFICATION\":\"HALLUCINATED\",\"JUSTIFICATION\":\"x\"}");
        assert_eq!(c.predicted, Some(Label::Hallucinated));
        assert_eq!(c.reasoning_trace, "");
    }

    #[test]
    fn parse_rejects_extra_key() {
        let c = parse_completion(
            "{\"CLASSIFICATION\":\"GROUNDED\",\"JUSTIFICATION\":\"x\",\"EXTRA\":1}",
        );
        assert_eq!(c.predicted, None);
    }

    #[test]
    fn parse_rejects_missing_key_and_wrong_case_keys() {
        assert_eq!(parse_completion("{\"CLASSIFICATION\":\"GROUNDED\"}").predicted, None);
        assert_eq!(
            parse_completion("{\"classification\":\"GROUNDED\",\"justification\":\"x\"}").predicted,
            None
        );
    }

    #[test]
    fn parse_normalizes_label_case_insensitively() {
        for raw_label in ["GROUNDED", "grounded", "Grounded", "gRoUnDeD"] {
            let raw = format!("{{\"CLASSIFICATION\":\"{raw_label}\",\"JUSTIFICATION\":\"j\"}}");
            assert_eq!(parse_completion(&raw).predicted, Some(Label::Grounded));
        }
        let raw = "{\"CLASSIFICATION\":\"maybe\",\"JUSTIFICATION\":\"j\"}";
        assert_eq!(parse_completion(raw).predicted, None);
    }

    #[test]
    fn parse_handles_nested_think_blocks() {
        let raw = "<think>outer <think>inner</think> tail</think>{\"CLASSIFICATION\":\"GROUNDED\",\"JUSTIFICATION\":\"j\"}";
        let c = parse_completion(raw);
        assert_eq!(c.reasoning_trace, "outer <think>inner</think> tail");
        assert_eq!(c.predicted, Some(Label::Grounded));
    }

    #[test]
    fn parse_rejects_dangling_think_and_trailing_garbage() {
        assert_eq!(parse_completion("<think>never closed {\"CLASSIFICATION\":\"GROUNDED\"}").predicted, None);
        assert_eq!(
            parse_completion("{\"CLASSIFICATION\":\"GROUNDED\",\"JUSTIFICATION\":\"j\"} trailing").predicted,
            None
        );
        assert_eq!(parse_completion("no json at all").predicted, None);
        assert_eq!(parse_completion("").predicted, None);
    }

    proptest! {
        /// Machine-rendered completions round-trip exactly.
        #[test]
        fn render_parse_roundtrip(
            grounded in any::<bool>(),
            justification in "[a-zA-Z0-9 .,'\"-]{0,120}",
            trace in "[a-zA-Z0-9 .,]{0,160}",
        ) {
            let label = if grounded { Label::Grounded } else { Label::Hallucinated };
            let rendered = render_completion(label, &justification, &trace);
            let parsed = parse_completion(&rendered);
            prop_assert_eq!(parsed.predicted, Some(label));
            prop_assert_eq!(parsed.justification, justification);
            prop_assert_eq!(parsed.reasoning_trace, trace);
        }
    }

    fn tuple_with(
        synthetic: Label,
        chosen_label: Option<Label>,
        rejected_label: Option<Label>,
    ) -> PreferenceTuple {
        let prompt = build_classification_prompt("A document body.", "A claim body.").unwrap();
        let completion = |label: Option<Label>, tag: &str| match label {
            Some(l) => {
                let raw = render_completion(l, &format!("{tag} justification"), &format!("{tag} trace"));
                parse_completion(&raw)
            }
            None => parse_completion(&format!("{tag} is not valid json")),
        };
        PreferenceTuple {
            doc_id: "d1".into(),
            prompt,
            chosen: completion(chosen_label, "chosen"),
            rejected: completion(rejected_label, "rejected"),
            synthetic_label: synthetic,
            audit: FilterAudit::default(),
        }
    }

    #[test]
    fn agreement_keeps_matching_label() {
        let t = tuple_with(Label::Grounded, Some(Label::Grounded), Some(Label::Grounded));
        assert_eq!(agreement_verify(&t), AgreementOutcome::Keep);
    }

    #[test]
    fn agreement_drops_mismatch_and_unparseable() {
        let t = tuple_with(Label::Grounded, Some(Label::Hallucinated), Some(Label::Grounded));
        assert_eq!(agreement_verify(&t), AgreementOutcome::DropLabelMismatch);
        let t = tuple_with(Label::Grounded, None, Some(Label::Grounded));
        assert_eq!(agreement_verify(&t), AgreementOutcome::DropUnparseableChosen);
    }

    #[test]
    fn generate_pair_attributes_by_client_identity() {
        let prompt = build_classification_prompt("Doc.", "Claim.").unwrap();
        let large = MockClient::new(MockBehavior::Fixed(render_completion(
            Label::Grounded,
            "from the large model",
            "t",
        )));
        let small = MockClient::new(MockBehavior::Fixed(render_completion(
            Label::Grounded,
            "from the small model",
            "t",
        )));
        for i in 0..10 {
            let t = generate_pair(
                &prompt,
                Label::Grounded,
                &format!("d{i}"),
                &large,
                &think_params(),
                &small,
                &think_params(),
            )
            .unwrap();
            assert!(t.chosen.justification.contains("large"));
            assert!(t.rejected.justification.contains("small"));
        }
    }

    #[test]
    fn generate_pair_skips_when_large_client_down() {
        let prompt = build_classification_prompt("Doc.", "Claim.").unwrap();
        let large = MockClient::new(MockBehavior::Fixed("x".into())).failing_first(u32::MAX);
        let small = MockClient::new(MockBehavior::Fixed("y".into()));
        let err = generate_pair(
            &prompt,
            Label::Grounded,
            "d1",
            &large,
            &think_params(),
            &small,
            &think_params(),
        )
        .unwrap_err();
        assert!(err.contains("large generator failed"));
    }

    fn marker_judge(marker: &str) -> MockClient {
        MockClient::new(MockBehavior::JudgePreferMarker(marker.into()))
    }

    #[test]
    fn consensus_keeps_when_both_judges_pick_chosen() {
        let mut t = tuple_with(Label::Grounded, Some(Label::Grounded), Some(Label::Grounded));
        t.chosen.raw = render_completion(Label::Grounded, "GOOD_MARKER justification", "t");
        let j = marker_judge("GOOD_MARKER");
        let examples = builtin_fewshot_examples();
        for order in [PresentationOrder::ChosenFirst, PresentationOrder::RejectedFirst] {
            let result = consensus_filter_with_order(
                &t,
                &j,
                &think_params(),
                &j,
                &think_params(),
                &examples,
                order,
            );
            assert!(result.keep, "order {order:?}");
            assert_eq!(result.judge1, JudgePick::Chosen);
            assert_eq!(result.judge2, JudgePick::Chosen);
            assert_eq!(result.order, order);
        }
    }

    #[test]
    fn consensus_drops_on_split_or_both_rejected() {
        let mut t = tuple_with(Label::Grounded, Some(Label::Grounded), Some(Label::Grounded));
        t.chosen.raw = render_completion(Label::Grounded, "ALPHA one", "t");
        t.rejected.raw = render_completion(Label::Grounded, "BETA two", "t");
        let examples = builtin_fewshot_examples();
        // split: one judge prefers chosen, the other rejected
        let result = consensus_filter_with_order(
            &t,
            &marker_judge("ALPHA"),
            &think_params(),
            &marker_judge("BETA"),
            &think_params(),
            &examples,
            PresentationOrder::ChosenFirst,
        );
        assert!(!result.keep);
        assert_eq!(result.drop_reason, Some(ConsensusDrop::JudgesSplit));
        // both pick rejected
        let result = consensus_filter_with_order(
            &t,
            &marker_judge("BETA"),
            &think_params(),
            &marker_judge("BETA"),
            &think_params(),
            &examples,
            PresentationOrder::RejectedFirst,
        );
        assert!(!result.keep);
        assert_eq!(result.drop_reason, Some(ConsensusDrop::BothPickedRejected));
    }

    #[test]
    fn consensus_drops_on_invalid_judge_output_or_unavailable_judge() {
        let t = tuple_with(Label::Grounded, Some(Label::Grounded), Some(Label::Grounded));
        let examples = builtin_fewshot_examples();
        let chatty = MockClient::new(MockBehavior::Fixed(
            "I prefer RESPONSE_A because it is better".into(),
        ));
        let ok = marker_judge("anything");
        let result = consensus_filter_with_order(
            &t,
            &chatty,
            &think_params(),
            &ok,
            &think_params(),
            &examples,
            PresentationOrder::ChosenFirst,
        );
        assert!(!result.keep);
        assert_eq!(result.drop_reason, Some(ConsensusDrop::InvalidJudgeOutput));
        assert_eq!(result.judge1, JudgePick::Invalid);

        let down = MockClient::new(MockBehavior::Fixed("RESPONSE_A".into())).failing_first(u32::MAX);
        let result = consensus_filter_with_order(
            &t,
            &down,
            &think_params(),
            &ok,
            &think_params(),
            &examples,
            PresentationOrder::ChosenFirst,
        );
        assert!(!result.keep);
        assert_eq!(result.drop_reason, Some(ConsensusDrop::JudgeUnavailable));
    }

    #[test]
    fn judge_pick_parser_accepts_quotes_rejects_prose() {
        assert_eq!(parse_judge_pick("RESPONSE_A"), Some(Side::A));
        assert_eq!(parse_judge_pick(" \"RESPONSE_B\" "), Some(Side::B));
        assert_eq!(parse_judge_pick("response_a"), Some(Side::A));
        assert_eq!(parse_judge_pick("RESPONSE_C"), None);
        assert_eq!(parse_judge_pick("RESPONSE_A is better"), None);
    }

    proptest! {
        /// With content-addressed judges, swapping the presentation order
        /// never changes keep/drop.
        #[test]
        fn consensus_invariant_under_presentation_order(
            chosen_good in any::<bool>(),
            rejected_good in any::<bool>(),
        ) {
            let mut t = tuple_with(Label::Grounded, Some(Label::Grounded), Some(Label::Grounded));
            t.chosen.raw = render_completion(
                Label::Grounded,
                if chosen_good { "MARKER chosen" } else { "plain chosen" },
                "t",
            );
            t.rejected.raw = render_completion(
                Label::Grounded,
                if rejected_good { "MARKER rejected" } else { "plain rejected" },
                "t",
            );
            let j = marker_judge("MARKER");
            let examples = serde_json::json!([]);
            let params = think_params();
            let a = consensus_filter_with_order(
                &t, &j, &params, &j, &params, &examples, PresentationOrder::ChosenFirst,
            );
            let b = consensus_filter_with_order(
                &t, &j, &params, &j, &params, &examples, PresentationOrder::RejectedFirst,
            );
            prop_assert_eq!(a.keep, b.keep);
            prop_assert_eq!(a.judge1, b.judge1);
            prop_assert_eq!(a.judge2, b.judge2);
        }
    }

    #[test]
    fn export_requires_both_filters_passed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prefs.jsonl");
        let mut t = tuple_with(Label::Grounded, Some(Label::Grounded), Some(Label::Grounded));
        t.audit.agreement_passed = true;
        t.audit.consensus_passed = false;
        let err = export_preference_dataset(&[t], &path).unwrap_err();
        assert!(matches!(err, Error::InvariantBreach(_)));
    }

    #[test]
    fn export_writes_assistant_messages_and_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prefs.jsonl");
        let mut t = tuple_with(Label::Grounded, Some(Label::Grounded), Some(Label::Hallucinated));
        t.audit.agreement_passed = true;
        t.audit.consensus_passed = true;
        let n = export_preference_dataset(&[t.clone()], &path).unwrap();
        assert_eq!(n, 1);
        let records = read_preference_export(&path).unwrap();
        assert_eq!(records.len(), 1);
        let rec = &records[0];
        assert_eq!(rec.prompt, t.prompt.rendered);
        assert_eq!(rec.chosen.len(), 1);
        assert_eq!(rec.chosen[0].role, "assistant");
        assert_eq!(rec.chosen[0].content, t.chosen.raw);
        assert_eq!(rec.rejected[0].role, "assistant");
        // the chosen content parses back to the same fields
        let parsed = parse_completion(&rec.chosen[0].content);
        assert_eq!(parsed.predicted, t.chosen.predicted);
        assert_eq!(parsed.justification, t.chosen.justification);
        assert_eq!(parsed.reasoning_trace, t.chosen.reasoning_trace);
    }

    #[test]
    fn export_empty_set_writes_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prefs.jsonl");
        let n = export_preference_dataset(&[], &path).unwrap();
        assert_eq!(n, 0);
        assert_eq!(std::fs::read(&path).unwrap(), b"");
    }
}
