//! Synthetic claim generation: one labeled claim per reformed document,
//! balanced half grounded and half hallucinated with the hallucinated half
//! split evenly between intrinsic and extrinsic.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::client::{ChatClient, ChatRequest, InferenceParams};
use crate::corpus::{Document, Stage};
use crate::sentences::SentenceSplitter;

/// Binary grounding label. Intrinsic and extrinsic hallucinations collapse
/// into a single `hallucinated` value downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Grounded,
    Hallucinated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subtype {
    None,
    Intrinsic,
    Extrinsic,
}

/// What kind of claim a prompt asks for. Carries both the binary label and
/// the hallucination subtype.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimKind {
    Grounded,
    Intrinsic,
    Extrinsic,
}

impl ClaimKind {
    pub fn label(self) -> Label {
        match self {
            ClaimKind::Grounded => Label::Grounded,
            ClaimKind::Intrinsic | ClaimKind::Extrinsic => Label::Hallucinated,
        }
    }

    pub fn subtype(self) -> Subtype {
        match self {
            ClaimKind::Grounded => Subtype::None,
            ClaimKind::Intrinsic => Subtype::Intrinsic,
            ClaimKind::Extrinsic => Subtype::Extrinsic,
        }
    }

    pub fn from_parts(label: Label, subtype: Subtype) -> Option<Self> {
        match (label, subtype) {
            (Label::Grounded, Subtype::None) => Some(ClaimKind::Grounded),
            (Label::Hallucinated, Subtype::Intrinsic) => Some(ClaimKind::Intrinsic),
            (Label::Hallucinated, Subtype::Extrinsic) => Some(ClaimKind::Extrinsic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Claim {
    pub text: String,
    pub kind: ClaimKind,
}

/// One (document, claim, label) triplet of the synthetic dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimTriplet {
    pub doc_id: String,
    pub document: String,
    pub claim: Claim,
}

#[derive(Serialize, Deserialize)]
struct TripletRow {
    doc_id: String,
    document: String,
    claim: String,
    label: Label,
    subtype: Subtype,
}

impl Serialize for ClaimTriplet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TripletRow {
            doc_id: self.doc_id.clone(),
            document: self.document.clone(),
            claim: self.claim.text.clone(),
            label: self.claim.kind.label(),
            subtype: self.claim.kind.subtype(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ClaimTriplet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let row = TripletRow::deserialize(deserializer)?;
        let kind = ClaimKind::from_parts(row.label, row.subtype).ok_or_else(|| {
            serde::de::Error::custom(format!(
                "label {:?} is inconsistent with subtype {:?}",
                row.label, row.subtype
            ))
        })?;
        Ok(ClaimTriplet {
            doc_id: row.doc_id,
            document: row.document,
            claim: Claim {
                text: row.claim,
                kind,
            },
        })
    }
}

/// Relative claim-kind quotas; must sum to 1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct Quotas {
    pub grounded: f64,
    pub intrinsic: f64,
    pub extrinsic: f64,
}

impl Default for Quotas {
    fn default() -> Self {
        Quotas {
            grounded: 0.5,
            intrinsic: 0.25,
            extrinsic: 0.25,
        }
    }
}

impl Quotas {
    pub fn sum(&self) -> f64 {
        self.grounded + self.intrinsic + self.extrinsic
    }
}

/// Assign claim kinds for `n` documents: ceil(n/2) grounded, the remainder
/// hallucinated and split as evenly as possible, intrinsic taking the odd
/// one. The assignment order is a seeded shuffle so balance is guaranteed
/// up front rather than by post-hoc filtering.
pub fn assign_quota(n: usize, rng: &mut ChaCha8Rng) -> Vec<ClaimKind> {
    assign_quota_weighted(n, &Quotas::default(), rng)
}

/// Generalized quota assignment for configurable fractions.
pub fn assign_quota_weighted(n: usize, quotas: &Quotas, rng: &mut ChaCha8Rng) -> Vec<ClaimKind> {
    debug_assert!((quotas.sum() - 1.0).abs() < 1e-9, "quotas must sum to 1");
    let grounded = (n as f64 * quotas.grounded).ceil() as usize;
    let grounded = grounded.min(n);
    let remaining = n - grounded;
    let hallu_mass = quotas.intrinsic + quotas.extrinsic;
    let intrinsic = if hallu_mass > 0.0 {
        ((remaining as f64) * quotas.intrinsic / hallu_mass).ceil() as usize
    } else {
        0
    };
    let intrinsic = intrinsic.min(remaining);
    let extrinsic = remaining - intrinsic;

    let mut kinds = Vec::with_capacity(n);
    kinds.extend(std::iter::repeat_n(ClaimKind::Grounded, grounded));
    kinds.extend(std::iter::repeat_n(ClaimKind::Intrinsic, intrinsic));
    kinds.extend(std::iter::repeat_n(ClaimKind::Extrinsic, extrinsic));
    kinds.shuffle(rng);
    kinds
}

const CLAIM_INSTRUCTIONS_GROUNDED: [&str; 3] = [
    "Generate a claim that is factually accurate and fully grounded in the provided context.",
    "Ensure that the claim is explicitly supported by the context - do not introduce information that is not directly verifiable from the context.",
    "Only return the claim as the answer. Do not include any additional text, explanation, or formatting.",
];

const CLAIM_INSTRUCTIONS_INTRINSIC: [&str; 3] = [
    "Generate a claim that contradicts the provided context.",
    "The claim should remain fluent and grammatically correct but should be identifiable as incorrect upon a quick read.",
    "Only return the claim as the answer. Do not include any additional text, explanation, or formatting.",
];

const CLAIM_INSTRUCTIONS_EXTRINSIC: [&str; 3] = [
    "Generate a claim that includes information that cannot be verified within the provided context.",
    "Ensure the claim is plausible but requires external knowledge to verify its accuracy.",
    "Only return the claim as the answer. Do not include any additional text, explanation, or formatting.",
];

pub fn claim_instructions(kind: ClaimKind) -> &'static [&'static str; 3] {
    match kind {
        ClaimKind::Grounded => &CLAIM_INSTRUCTIONS_GROUNDED,
        ClaimKind::Intrinsic => &CLAIM_INSTRUCTIONS_INTRINSIC,
        ClaimKind::Extrinsic => &CLAIM_INSTRUCTIONS_EXTRINSIC,
    }
}

#[derive(Serialize)]
struct ClaimPromptBody<'a> {
    instructions: &'static [&'static str; 3],
    context: &'a str,
    answer: &'static str,
}

/// Render the structured JSON generation prompt for one claim kind.
/// Byte-stable for fixed input.
pub fn build_claim_prompt(doc: &Document, kind: ClaimKind) -> String {
    serde_json::to_string_pretty(&ClaimPromptBody {
        instructions: claim_instructions(kind),
        context: &doc.text,
        answer: "",
    })
    .expect("claim prompt serializes")
}

/// Maximum sentences a returned claim may span before it is rejected.
const MAX_CLAIM_SENTENCES: usize = 3;

fn strip_wrapping_quotes(s: &str) -> &str {
    let s = s.trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('\u{201c}', '\u{201d}')] {
        if s.len() >= 2 && s.starts_with(open) && s.ends_with(close) {
            return s[open.len_utf8()..s.len() - close.len_utf8()].trim();
        }
    }
    s
}

/// Why a model response was rejected as a claim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimRejection {
    Empty,
    MultiLine,
    InstructionEcho,
    TooManySentences,
    ClientError,
}

fn validate_claim_text(raw: &str, kind: ClaimKind) -> Result<String, ClaimRejection> {
    let text = strip_wrapping_quotes(raw);
    if text.is_empty() {
        return Err(ClaimRejection::Empty);
    }
    if text.lines().count() > 1 {
        return Err(ClaimRejection::MultiLine);
    }
    if claim_instructions(kind).iter().any(|i| text.contains(i)) {
        return Err(ClaimRejection::InstructionEcho);
    }
    let splitter = SentenceSplitter::default();
    if splitter.count(text) > MAX_CLAIM_SENTENCES {
        return Err(ClaimRejection::TooManySentences);
    }
    Ok(text.to_string())
}

/// Generate one claim for a reformed document. Malformed responses are
/// retried once and then skipped.
pub fn generate_claim(
    doc: &Document,
    kind: ClaimKind,
    client: &dyn ChatClient,
    params: &InferenceParams,
) -> Result<ClaimTriplet, ClaimRejection> {
    debug_assert!(doc.stage == Stage::Reformed);
    let request = ChatRequest::user("cg", build_claim_prompt(doc, kind), params.clone());
    let mut last = ClaimRejection::Empty;
    for _ in 0..2 {
        let response = match client.complete(&request) {
            Ok(r) => r,
            Err(_) => {
                last = ClaimRejection::ClientError;
                continue;
            }
        };
        match validate_claim_text(&response.content, kind) {
            Ok(text) => {
                return Ok(ClaimTriplet {
                    doc_id: doc.id.clone(),
                    document: doc.text.clone(),
                    claim: Claim { text, kind },
                })
            }
            Err(reason) => last = reason,
        }
    }
    Err(last)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct KindCounts {
    pub grounded: usize,
    pub intrinsic: usize,
    pub extrinsic: usize,
}

impl KindCounts {
    pub fn bump(&mut self, kind: ClaimKind) {
        match kind {
            ClaimKind::Grounded => self.grounded += 1,
            ClaimKind::Intrinsic => self.intrinsic += 1,
            ClaimKind::Extrinsic => self.extrinsic += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.grounded + self.intrinsic + self.extrinsic
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ClaimStats {
    pub requested: KindCounts,
    pub generated: KindCounts,
    pub skipped: KindCounts,
}

/// Generate claims for a batch of reformed documents. Quota kinds are
/// drawn up front; skipped documents are reported per kind, not replaced.
pub fn generate_claims(
    docs: &[Document],
    quotas: &Quotas,
    client: &dyn ChatClient,
    params: &InferenceParams,
    rng: &mut ChaCha8Rng,
    parallelism: usize,
) -> (Vec<ClaimTriplet>, ClaimStats) {
    let kinds = assign_quota_weighted(docs.len(), quotas, rng);
    let mut stats = ClaimStats::default();
    for kind in &kinds {
        stats.requested.bump(*kind);
    }
    let jobs: Vec<(&Document, ClaimKind)> = docs.iter().zip(kinds).collect();
    let results: Vec<Result<ClaimTriplet, (ClaimKind, ClaimRejection)>> =
        crate::pipeline::run_ordered(&jobs, parallelism, |(doc, kind)| {
            generate_claim(doc, *kind, client, params).map_err(|r| (*kind, r))
        });
    let mut triplets = Vec::with_capacity(docs.len());
    for result in results {
        match result {
            Ok(triplet) => {
                stats.generated.bump(triplet.claim.kind);
                triplets.push(triplet);
            }
            Err((kind, reason)) => {
                stats.skipped.bump(kind);
                log::warn!("claim generation skipped a {kind:?} claim: {reason:?}");
            }
        }
    }
    (triplets, stats)
}
