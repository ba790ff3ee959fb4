//! Style reformation: rewrite each clean document in one of 18 styles at a
//! temperature sampled uniformly from [0.2, 0.7].

use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::{ChatClient, ChatRequest, ErrorKind, InferenceParams};
use crate::corpus::{Document, Stage};
use crate::error::{Error, Result};

pub const TEMPERATURE_RANGE: (f64, f64) = (0.2, 0.7);
pub const STYLE_COUNT: usize = 18;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Style {
    pub id: String,
    pub instruction: String,
}

/// The fixed registry of rewriting styles. Exactly 18 entries with unique
/// ids; the default set ships with the crate as a data file.
#[derive(Debug, Clone)]
pub struct StyleRegistry {
    styles: Vec<Style>,
}

/// Bundled style registry used when no styles path is configured.
pub const BUILTIN_STYLES: &str = include_str!("../data/styles.json");

impl StyleRegistry {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_STYLES).expect("bundled style registry is valid")
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let styles: Vec<Style> = serde_json::from_str(raw)?;
        if styles.len() != STYLE_COUNT {
            return Err(Error::Config(format!(
                "style registry must hold exactly {STYLE_COUNT} styles, found {}",
                styles.len()
            )));
        }
        let ids: HashSet<&str> = styles.iter().map(|s| s.id.as_str()).collect();
        if ids.len() != styles.len() {
            return Err(Error::Config("style ids must be unique".into()));
        }
        Ok(StyleRegistry { styles })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw)
    }

    pub fn len(&self) -> usize {
        self.styles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.styles.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Style> {
        self.styles.iter().find(|s| s.id == id)
    }

    pub fn styles(&self) -> &[Style] {
        &self.styles
    }
}

/// Draw a style uniformly from the registry.
pub fn pick_style<'r>(registry: &'r StyleRegistry, rng: &mut ChaCha8Rng) -> &'r Style {
    let idx = rng.random_range(0..registry.styles.len());
    &registry.styles[idx]
}

/// Draw a rewriting temperature uniformly from [0.2, 0.7].
pub fn sample_temperature(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(TEMPERATURE_RANGE.0..=TEMPERATURE_RANGE.1)
}

/// One reformed document with full provenance of the draw that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReformRecord {
    pub doc_id: String,
    pub style_id: String,
    pub temperature: f64,
    pub reformed_text: String,
}

impl ReformRecord {
    /// View the record as a reformed-stage document for downstream stages.
    pub fn to_document(&self) -> Document {
        Document {
            id: self.doc_id.clone(),
            text: self.reformed_text.clone(),
            language_score: 1.0,
            url: None,
            stage: Stage::Reformed,
        }
    }
}

/// Single user message: instruction, blank line, document text.
pub fn reform_prompt(style: &Style, doc: &Document) -> String {
    format!("{}\n\n{}", style.instruction, doc.text)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReformFailure {
    pub doc_id: String,
    pub style_id: String,
    pub temperature: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReformStats {
    pub attempted: usize,
    pub reformed: usize,
    pub skipped_empty: usize,
    pub skipped_client_error: usize,
    /// Draws are logged even when the request failed, so a retry of the
    /// run reuses the same style and temperature.
    pub failures: Vec<ReformFailure>,
}

/// Rewrite one document. Empty responses and exhausted-retry client errors
/// are failures, not panics.
pub fn reform_document(
    doc: &Document,
    style: &Style,
    temperature: f64,
    client: &dyn ChatClient,
    params: &InferenceParams,
) -> std::result::Result<ReformRecord, String> {
    debug_assert!(doc.stage >= Stage::Clean);
    let request = ChatRequest::user(
        "dr",
        reform_prompt(style, doc),
        params.clone().with_temperature(temperature),
    );
    let response = client
        .complete(&request)
        .map_err(|e| format!("client error: {}", e.kind))?;
    if response.content.trim().is_empty() {
        return Err("empty response".into());
    }
    Ok(ReformRecord {
        doc_id: doc.id.clone(),
        style_id: style.id.clone(),
        temperature,
        reformed_text: response.content,
    })
}

/// Reform a whole batch: draws happen sequentially up front (so they are
/// reproducible and logged even on failure), requests run in parallel, and
/// results commit in input order.
pub fn reform_all(
    docs: &[Document],
    registry: &StyleRegistry,
    client: &dyn ChatClient,
    params: &InferenceParams,
    rng: &mut ChaCha8Rng,
    parallelism: usize,
) -> (Vec<ReformRecord>, ReformStats) {
    let draws: Vec<(&Document, &Style, f64)> = docs
        .iter()
        .map(|doc| {
            let style = pick_style(registry, rng);
            let temperature = sample_temperature(rng);
            (doc, style, temperature)
        })
        .collect();

    let results: Vec<std::result::Result<ReformRecord, ReformFailure>> =
        crate::pipeline::run_ordered(&draws, parallelism, |(doc, style, temperature)| {
            reform_document(doc, style, *temperature, client, params).map_err(|reason| {
                ReformFailure {
                    doc_id: doc.id.clone(),
                    style_id: style.id.clone(),
                    temperature: *temperature,
                    reason,
                }
            })
        });

    let mut stats = ReformStats {
        attempted: docs.len(),
        ..Default::default()
    };
    let mut records = Vec::with_capacity(docs.len());
    for result in results {
        match result {
            Ok(record) => {
                stats.reformed += 1;
                records.push(record);
            }
            Err(failure) => {
                if failure.reason.contains("empty response") {
                    stats.skipped_empty += 1;
                } else {
                    stats.skipped_client_error += 1;
                }
                log::warn!(
                    "reform skipped doc {} (style {}): {}",
                    failure.doc_id,
                    failure.style_id,
                    failure.reason
                );
                stats.failures.push(failure);
            }
        }
    }
    (records, stats)
}
