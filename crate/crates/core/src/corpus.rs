//! Raw corpus ingestion: loading, language gating, exact deduplication,
//! and reproducible uniform sampling.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::content_key;
use crate::seed::substream;

/// Position of a document in the pipeline. Transitions are monotone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Raw,
    Agnostic,
    Clean,
    Reformed,
}

/// One corpus text with provenance and quality metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub language_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub stage: Stage,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            language_score: 1.0,
            url: None,
            stage: Stage::Raw,
        }
    }

    /// Whitespace-delimited token count of `text`.
    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }

    /// Move the document forward in the pipeline. Going backwards is a bug.
    pub fn advance(&mut self, to: Stage) {
        assert!(
            to >= self.stage,
            "stage transition {:?} -> {:?} is not monotone",
            self.stage,
            to
        );
        self.stage = to;
    }
}

/// Maps configurable input field names onto `Document` fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMap {
    pub id: String,
    pub text: String,
    pub language_score: String,
    pub url: String,
}

impl Default for FieldMap {
    fn default() -> Self {
        FieldMap {
            id: "id".into(),
            text: "text".into(),
            language_score: "language_score".into(),
            url: "url".into(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LoadStats {
    pub records_read: usize,
    pub loaded: usize,
    pub skipped_malformed: usize,
    pub skipped_missing_text: usize,
}

impl LoadStats {
    pub fn skipped(&self) -> usize {
        self.skipped_malformed + self.skipped_missing_text
    }
}

/// Streaming reader over a line-delimited corpus file.
///
/// Malformed records are counted and skipped rather than aborting the run;
/// an unreadable file is fatal.
pub struct CorpusReader {
    lines: std::io::Lines<BufReader<File>>,
    map: FieldMap,
    stats: LoadStats,
    line_no: usize,
}

impl CorpusReader {
    pub fn open(path: &Path, map: FieldMap) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(CorpusReader {
            lines: BufReader::new(file).lines(),
            map,
            stats: LoadStats::default(),
            line_no: 0,
        })
    }

    pub fn stats(&self) -> &LoadStats {
        &self.stats
    }

    fn parse_line(&mut self, line: &str) -> Option<Document> {
        let value: serde_json::Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(_) => {
                self.stats.skipped_malformed += 1;
                return None;
            }
        };
        let text = match value.get(&self.map.text).and_then(|v| v.as_str()) {
            Some(t) if !t.trim().is_empty() => t.to_string(),
            _ => {
                self.stats.skipped_missing_text += 1;
                return None;
            }
        };
        let id = match value.get(&self.map.id) {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => format!("doc-{}", self.line_no),
        };
        let language_score = match value.get(&self.map.language_score) {
            None | Some(serde_json::Value::Null) => 1.0,
            Some(v) => match v.as_f64() {
                Some(s) if (0.0..=1.0).contains(&s) => s,
                _ => {
                    self.stats.skipped_malformed += 1;
                    return None;
                }
            },
        };
        let url = value
            .get(&self.map.url)
            .and_then(|v| v.as_str())
            .map(|s| s.to_string());
        Some(Document {
            id,
            text,
            language_score,
            url,
            stage: Stage::Raw,
        })
    }
}

impl Iterator for CorpusReader {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io("<corpus>", e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            self.stats.records_read += 1;
            if let Some(doc) = self.parse_line(&line) {
                self.stats.loaded += 1;
                return Some(Ok(doc));
            }
        }
    }
}

/// Load an entire corpus file into memory, in file order.
pub fn load_corpus(path: &Path, map: &FieldMap) -> Result<(Vec<Document>, LoadStats)> {
    let mut reader = CorpusReader::open(path, map.clone())?;
    let mut docs = Vec::new();
    for doc in reader.by_ref() {
        docs.push(doc?);
    }
    Ok((docs, reader.stats().clone()))
}

/// True iff the document clears the language-confidence threshold.
pub fn gate_language(doc: &Document, threshold: f64) -> bool {
    debug_assert!((0.0..=1.0).contains(&threshold));
    doc.language_score >= threshold
}

/// Drop later occurrences of byte-equal texts (after trimming leading and
/// trailing whitespace), preserving input order among survivors.
///
/// The duplicate key is a 128-bit content hash of the trimmed text;
/// hash collisions are resolved by full byte comparison.
pub fn exact_dedup(docs: Vec<Document>) -> (Vec<Document>, usize) {
    let mut seen: HashMap<u128, Vec<usize>> = HashMap::new();
    let mut survivors: Vec<Document> = Vec::with_capacity(docs.len());
    let mut dropped = 0usize;
    for doc in docs {
        let trimmed = doc.text.trim();
        let key = content_key(trimmed.as_bytes());
        let bucket = seen.entry(key).or_default();
        let duplicate = bucket
            .iter()
            .any(|&idx| survivors[idx].text.trim() == trimmed);
        if duplicate {
            dropped += 1;
        } else {
            bucket.push(survivors.len());
            survivors.push(doc);
        }
    }
    (survivors, dropped)
}

/// Reservoir-sample exactly `n` documents without replacement.
///
/// Deterministic for a fixed `(seed, input)` pair; sampled documents are
/// advanced to [`Stage::Agnostic`]. Fails if fewer than `n` documents are
/// available.
pub fn sample_uniform(
    docs: impl IntoIterator<Item = Document>,
    n: usize,
    seed: u64,
) -> Result<Vec<Document>> {
    let mut rng = substream(seed, "corpus.sample");
    let mut reservoir: Vec<Document> = Vec::with_capacity(n);
    let mut total = 0usize;
    for doc in docs {
        if n == 0 {
            total += 1;
            continue;
        }
        if reservoir.len() < n {
            reservoir.push(doc);
        } else {
            let j = rng.random_range(0..=total);
            if j < n {
                reservoir[j] = doc;
            }
        }
        total += 1;
    }
    if total < n {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: total,
        });
    }
    for doc in &mut reservoir {
        doc.advance(Stage::Agnostic);
    }
    Ok(reservoir)
}
