//! Deterministic scripted/behavioral mock client.
//!
//! Two flavors: a script map from request fingerprints to canned replies,
//! and behavioral mocks that compute a reply from the prompt content alone.
//! Both are pure functions of the request, so pipeline runs against mock
//! endpoints are byte-reproducible.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};

use sha2::{Digest, Sha256};

use super::{strip_mode_token, AttemptError, ChatClient, ErrorKind, InferenceParams, Message, Mode};
use crate::claims::Label;
use crate::error::{Error, Result};
use crate::preference::{parse_completion, render_completion};

/// Stable fingerprint of an outgoing message list (mode token included).
pub fn fingerprint(messages: &[Message]) -> String {
    let mut hasher = Sha256::new();
    for m in messages {
        hasher.update(m.role.as_bytes());
        hasher.update([0x1f]);
        hasher.update(m.content.as_bytes());
        hasher.update([0x1e]);
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha_u64(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

fn first_words(text: &str, n: usize) -> String {
    text.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}

/// Claims written by [`MockBehavior::ClaimWriter`] start with one of these
/// markers; the classifier and judge mocks use them as ground truth.
pub const GROUNDED_MARKER: &str = "The document states";
const INTRINSIC_MARKER: &str = "Contrary to the document";
const EXTRINSIC_MARKER: &str = "Beyond the document";

fn marker_truth(claim: &str) -> Label {
    if claim.starts_with(GROUNDED_MARKER) {
        Label::Grounded
    } else {
        Label::Hallucinated
    }
}

#[derive(Debug, Clone)]
pub enum MockBehavior {
    /// Return the final user message verbatim.
    Echo,
    /// Return the same canned reply for every request.
    Fixed(String),
    /// Map request fingerprints to canned replies; unknown fingerprints
    /// fail permanently.
    Script(BTreeMap<String, String>),
    /// Restyle a reformation prompt: tag derived from the instruction,
    /// body carried through.
    Reformer,
    /// Answer a claim-generation prompt with a single marked claim
    /// matching the requested kind.
    ClaimWriter,
    /// Classify marked claims mostly correctly (one in five flipped, keyed
    /// by content hash), with a substantial justification.
    ClassifierStrong,
    /// Always answer GROUNDED with a thin justification; one in six
    /// responses is malformed prose.
    ClassifierWeak,
    /// Pairwise judge: prefers the response whose label matches the claim
    /// marker, then the longer justification, then lexicographic order.
    JudgePrimary,
    /// Like [`MockBehavior::JudgePrimary`] but flips its pick for one in
    /// seven documents, keyed by document hash.
    JudgeSecondary,
    /// Pick the response containing a marker substring (test helper).
    JudgePreferMarker(String),
}

impl MockBehavior {
    /// Parse a behavior name from configuration.
    pub fn from_name(name: &str) -> Result<Self> {
        let behavior = match name {
            "echo" => MockBehavior::Echo,
            "reformer" => MockBehavior::Reformer,
            "claim_writer" => MockBehavior::ClaimWriter,
            "classifier_strong" => MockBehavior::ClassifierStrong,
            "classifier_weak" => MockBehavior::ClassifierWeak,
            "judge_primary" => MockBehavior::JudgePrimary,
            "judge_secondary" => MockBehavior::JudgeSecondary,
            other => {
                if let Some(text) = other.strip_prefix("fixed:") {
                    MockBehavior::Fixed(text.to_string())
                } else {
                    return Err(Error::Config(format!("unknown mock behavior `{other}`")));
                }
            }
        };
        Ok(behavior)
    }
}

pub struct MockClient {
    behavior: MockBehavior,
    fail_first: u32,
    fail_kind: ErrorKind,
    fail_transient: bool,
    calls: AtomicU32,
}

impl MockClient {
    pub fn new(behavior: MockBehavior) -> Self {
        MockClient {
            behavior,
            fail_first: 0,
            fail_kind: ErrorKind::Network,
            fail_transient: true,
            calls: AtomicU32::new(0),
        }
    }

    pub fn scripted(map: BTreeMap<String, String>) -> Self {
        Self::new(MockBehavior::Script(map))
    }

    /// Load a fingerprint-to-reply script from a JSON object file.
    pub fn from_script_file(path: &Path) -> Result<Self> {
        let map: BTreeMap<String, String> = crate::io::read_json(path)?;
        Ok(Self::scripted(map))
    }

    /// Fail the first `n` attempts before serving replies.
    pub fn failing_first(mut self, n: u32) -> Self {
        self.fail_first = n;
        self
    }

    pub fn with_failure_kind(mut self, kind: ErrorKind, transient: bool) -> Self {
        self.fail_kind = kind;
        self.fail_transient = transient;
        self
    }

    /// Number of attempts served so far (including injected failures).
    pub fn calls(&self) -> u32 {
        self.calls.load(Ordering::SeqCst)
    }

    fn reply(&self, messages: &[Message], params: &InferenceParams) -> std::result::Result<String, AttemptError> {
        let last_user = messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        let prompt = strip_mode_token(last_user);
        match &self.behavior {
            MockBehavior::Echo => Ok(last_user.to_string()),
            MockBehavior::Fixed(text) => Ok(text.clone()),
            MockBehavior::Script(map) => {
                map.get(&fingerprint(messages)).cloned().ok_or(AttemptError {
                    kind: ErrorKind::HttpStatus(404),
                    transient: false,
                })
            }
            MockBehavior::Reformer => Ok(reform_reply(prompt)),
            MockBehavior::ClaimWriter => Ok(claim_reply(prompt)),
            MockBehavior::ClassifierStrong => Ok(classify_strong(prompt, params.mode)),
            MockBehavior::ClassifierWeak => Ok(classify_weak(prompt, params.mode)),
            MockBehavior::JudgePrimary => Ok(judge_reply(prompt, false)),
            MockBehavior::JudgeSecondary => Ok(judge_reply(prompt, true)),
            MockBehavior::JudgePreferMarker(marker) => Ok(judge_marker_reply(prompt, marker)),
        }
    }
}

impl ChatClient for MockClient {
    fn attempt(
        &self,
        messages: &[Message],
        params: &InferenceParams,
    ) -> std::result::Result<String, AttemptError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        if call < self.fail_first {
            return Err(AttemptError {
                kind: self.fail_kind,
                transient: self.fail_transient,
            });
        }
        self.reply(messages, params)
    }

    fn backoff_base(&self) -> std::time::Duration {
        std::time::Duration::ZERO
    }
}

fn reform_reply(prompt: &str) -> String {
    let (instruction, body) = match prompt.split_once("\n\n") {
        Some(parts) => parts,
        None => ("", prompt),
    };
    let tag = format!("{:06x}", sha_u64(instruction) & 0xff_ffff);
    format!("[{tag}] {body}")
}

fn claim_reply(prompt: &str) -> String {
    let parsed: serde_json::Value = match serde_json::from_str(prompt) {
        Ok(v) => v,
        Err(_) => return "Unable to comply.".to_string(),
    };
    let first_instruction = parsed["instructions"][0].as_str().unwrap_or_default();
    let context = parsed["context"].as_str().unwrap_or_default();
    let snippet = first_words(context, 8);
    if first_instruction.contains("fully grounded") {
        format!("{GROUNDED_MARKER}: {snippet}.")
    } else if first_instruction.contains("contradicts") {
        format!("{INTRINSIC_MARKER}, it is false that {snippet}.")
    } else {
        format!("{EXTRINSIC_MARKER}, {snippet} was confirmed by later studies.")
    }
}

fn classification_inputs(prompt: &str) -> Option<(String, String)> {
    let parsed: serde_json::Value = serde_json::from_str(prompt).ok()?;
    let document = parsed["document"].as_str()?.to_string();
    let claim = parsed["claim"].as_str()?.to_string();
    Some((document, claim))
}

fn classify_strong(prompt: &str, mode: Mode) -> String {
    let Some((document, claim)) = classification_inputs(prompt) else {
        return "Cannot read the task.".to_string();
    };
    let truth = marker_truth(&claim);
    let flip = sha_u64(&format!("{document}|{claim}")) % 5 == 0;
    let predicted = match (truth, flip) {
        (label, false) => label,
        (Label::Grounded, true) => Label::Hallucinated,
        (Label::Hallucinated, true) => Label::Grounded,
    };
    let doc_snippet = first_words(&document, 6);
    let verdict_phrase = match predicted {
        Label::Grounded => "is directly supported by",
        Label::Hallucinated => "is not supported by",
    };
    let justification = format!(
        "The claim {verdict_phrase} the document, which begins with '{doc_snippet}'."
    );
    let trace = match mode {
        Mode::Think => format!(
            "Okay, let's check the claim against the document. The claim says '{}'. The document opens with '{doc_snippet}'. Weighing the evidence now.",
            first_words(&claim, 6)
        ),
        Mode::NoThink => String::new(),
    };
    render_completion(predicted, &justification, &trace)
}

fn classify_weak(prompt: &str, mode: Mode) -> String {
    let Some((_, claim)) = classification_inputs(prompt) else {
        return "Cannot read the task.".to_string();
    };
    if sha_u64(&claim) % 6 == 0 {
        return "I believe this claim is GROUNDED because it sounds plausible.".to_string();
    }
    let trace = match mode {
        Mode::Think => "Hmm, the claim looks consistent with the document.".to_string(),
        Mode::NoThink => String::new(),
    };
    render_completion(Label::Grounded, "The claim lines up with the text.", &trace)
}

fn judge_inputs(prompt: &str) -> Option<(String, String, String, String)> {
    let parsed: serde_json::Value = serde_json::from_str(prompt).ok()?;
    Some((
        parsed["document"].as_str()?.to_string(),
        parsed["claim"].as_str()?.to_string(),
        parsed["RESPONSE_A"].as_str()?.to_string(),
        parsed["RESPONSE_B"].as_str()?.to_string(),
    ))
}

/// Content-addressed pairwise preference: label correctness first, then
/// justification length, then lexicographic order. The secondary variant
/// flips its pick for a hash-selected slice of documents so the two judges
/// disagree occasionally.
fn judge_reply(prompt: &str, secondary: bool) -> String {
    let Some((document, claim, response_a, response_b)) = judge_inputs(prompt) else {
        return "RESPONSE_A".to_string();
    };
    let truth = marker_truth(&claim);
    let a = parse_completion(&response_a);
    let b = parse_completion(&response_b);
    let a_match = a.predicted == Some(truth);
    let b_match = b.predicted == Some(truth);
    let mut pick_a = match (a_match, b_match) {
        (true, false) => true,
        (false, true) => false,
        _ => match a.justification.len().cmp(&b.justification.len()) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => response_a <= response_b,
        },
    };
    if secondary && sha_u64(&document) % 7 == 0 {
        pick_a = !pick_a;
    }
    if pick_a { "RESPONSE_A" } else { "RESPONSE_B" }.to_string()
}

fn judge_marker_reply(prompt: &str, marker: &str) -> String {
    let Some((_, _, response_a, response_b)) = judge_inputs(prompt) else {
        return "RESPONSE_A".to_string();
    };
    let a_has = response_a.contains(marker);
    let b_has = response_b.contains(marker);
    let pick_a = match (a_has, b_has) {
        (true, false) => true,
        (false, true) => false,
        _ => response_a <= response_b,
    };
    if pick_a { "RESPONSE_A" } else { "RESPONSE_B" }.to_string()
}
