//! Benchmark evaluation: strict-contract classification of document-claim
//! pairs, confusion matrices with `hallucinated` as the positive class,
//! balanced accuracy, macro averaging, and judged justification scoring.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::claims::Label;
use crate::client::{ChatClient, ChatRequest, InferenceParams};
use crate::error::{Error, Result};
use crate::io;
use crate::preference::{build_classification_prompt, parse_completion};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRecord {
    pub dataset: String,
    pub record_id: String,
    pub document: String,
    pub claim: String,
    pub gold: Label,
}

/// Field names and label vocabulary of a benchmark file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkMapping {
    pub id_field: String,
    pub document_field: String,
    pub claim_field: String,
    pub label_field: String,
    /// Raw label value (stringified) to binary label.
    pub label_map: BTreeMap<String, Label>,
}

impl Default for BenchmarkMapping {
    fn default() -> Self {
        let mut label_map = BTreeMap::new();
        for (k, v) in [
            ("1", Label::Grounded),
            ("0", Label::Hallucinated),
            ("true", Label::Grounded),
            ("false", Label::Hallucinated),
            ("supported", Label::Grounded),
            ("unsupported", Label::Hallucinated),
            ("grounded", Label::Grounded),
            ("hallucinated", Label::Hallucinated),
        ] {
            label_map.insert(k.to_string(), v);
        }
        BenchmarkMapping {
            id_field: "record_id".into(),
            document_field: "document".into(),
            claim_field: "claim".into(),
            label_field: "label".into(),
            label_map,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BenchLoadStats {
    pub loaded: usize,
    pub skipped_unmappable_label: usize,
    pub skipped_malformed: usize,
}

fn raw_label_string(value: &serde_json::Value) -> Option<String> {
    match value {
        serde_json::Value::String(s) => Some(s.to_lowercase()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Load a line-delimited benchmark file in file order. Records with labels
/// outside the mapping are counted and skipped.
pub fn load_benchmark(
    path: &Path,
    dataset_name: &str,
    mapping: &BenchmarkMapping,
) -> Result<(Vec<BenchRecord>, BenchLoadStats)> {
    let rows: Vec<serde_json::Value> = io::read_jsonl(path)?;
    let mut stats = BenchLoadStats::default();
    let mut records = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let document = row.get(&mapping.document_field).and_then(|v| v.as_str());
        let claim = row.get(&mapping.claim_field).and_then(|v| v.as_str());
        let (document, claim) = match (document, claim) {
            (Some(d), Some(c)) if !d.trim().is_empty() && !c.trim().is_empty() => (d, c),
            _ => {
                stats.skipped_malformed += 1;
                continue;
            }
        };
        let raw_label = row
            .get(&mapping.label_field)
            .and_then(raw_label_string)
            .unwrap_or_default();
        let gold = match mapping.label_map.get(&raw_label) {
            Some(label) => *label,
            None => {
                log::warn!("{dataset_name}: unmappable label `{raw_label}` skipped");
                stats.skipped_unmappable_label += 1;
                continue;
            }
        };
        let record_id = match row.get(&mapping.id_field) {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => format!("{dataset_name}-{i}"),
        };
        stats.loaded += 1;
        records.push(BenchRecord {
            dataset: dataset_name.to_string(),
            record_id,
            document: document.to_string(),
            claim: claim.to_string(),
            gold,
        });
    }
    Ok((records, stats))
}

/// Model output after strict parsing: a label, or `invalid` for any
/// deviation from the output contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    Grounded,
    Hallucinated,
    Invalid,
}

impl From<Option<Label>> for Prediction {
    fn from(value: Option<Label>) -> Self {
        match value {
            Some(Label::Grounded) => Prediction::Grounded,
            Some(Label::Hallucinated) => Prediction::Hallucinated,
            None => Prediction::Invalid,
        }
    }
}

impl Prediction {
    pub fn matches(self, gold: Label) -> bool {
        matches!(
            (self, gold),
            (Prediction::Grounded, Label::Grounded)
                | (Prediction::Hallucinated, Label::Hallucinated)
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalVerdict {
    pub record_id: String,
    pub gold: Label,
    pub predicted: Prediction,
    pub justification: String,
    pub reasoning_trace: String,
    pub raw_response: String,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geval: Option<GEvalScore>,
}

/// Classify one benchmark record. Client failures and contract violations
/// both score as incorrect `invalid` predictions.
pub fn classify_record(
    record: &BenchRecord,
    client: &dyn ChatClient,
    params: &InferenceParams,
) -> EvalVerdict {
    let prompt = match build_classification_prompt(&record.document, &record.claim) {
        Ok(p) => p,
        Err(e) => {
            return EvalVerdict {
                record_id: record.record_id.clone(),
                gold: record.gold,
                predicted: Prediction::Invalid,
                justification: String::new(),
                reasoning_trace: String::new(),
                raw_response: String::new(),
                correct: false,
                error: Some(e.to_string()),
                geval: None,
            }
        }
    };
    let request = ChatRequest::user("eval", prompt.rendered, params.clone());
    match client.complete(&request) {
        Err(e) => EvalVerdict {
            record_id: record.record_id.clone(),
            gold: record.gold,
            predicted: Prediction::Invalid,
            justification: String::new(),
            reasoning_trace: String::new(),
            raw_response: String::new(),
            correct: false,
            error: Some(e.to_string()),
            geval: None,
        },
        Ok(response) => {
            let completion = parse_completion(&response.content);
            let predicted: Prediction = completion.predicted.into();
            EvalVerdict {
                record_id: record.record_id.clone(),
                gold: record.gold,
                predicted,
                justification: completion.justification,
                reasoning_trace: completion.reasoning_trace,
                raw_response: response.content,
                correct: predicted.matches(record.gold),
                error: None,
                geval: None,
            }
        }
    }
}

/// Confusion counts with `hallucinated` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub fp: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, tn: u64, fp: u64) -> Self {
        ConfusionMatrix { tp, fn_, tn, fp }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.tn + self.fp
    }

    pub fn tpr(&self) -> Option<f64> {
        let denom = self.tp + self.fn_;
        (denom > 0).then(|| self.tp as f64 / denom as f64)
    }

    pub fn tnr(&self) -> Option<f64> {
        let denom = self.tn + self.fp;
        (denom > 0).then(|| self.tn as f64 / denom as f64)
    }
}

/// How invalid predictions enter the confusion matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidPolicy {
    /// Score invalid as the wrong cell for the gold class, keeping
    /// tp+fn+tn+fp equal to the record count.
    #[default]
    WrongCell,
    /// Keep invalid records out of the matrix; reported separately.
    Exclude,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct ConfusionSummary {
    pub matrix: ConfusionMatrix,
    pub invalid: u64,
}

/// Aggregate verdicts into a confusion matrix; order-insensitive.
pub fn confusion(verdicts: &[EvalVerdict], policy: InvalidPolicy) -> ConfusionSummary {
    let mut summary = ConfusionSummary::default();
    let m = &mut summary.matrix;
    for v in verdicts {
        match (v.predicted, v.gold) {
            (Prediction::Hallucinated, Label::Hallucinated) => m.tp += 1,
            (Prediction::Grounded, Label::Hallucinated) => m.fn_ += 1,
            (Prediction::Grounded, Label::Grounded) => m.tn += 1,
            (Prediction::Hallucinated, Label::Grounded) => m.fp += 1,
            (Prediction::Invalid, gold) => {
                summary.invalid += 1;
                if policy == InvalidPolicy::WrongCell {
                    match gold {
                        Label::Hallucinated => m.fn_ += 1,
                        Label::Grounded => m.fp += 1,
                    }
                }
            }
        }
    }
    summary
}

/// Balanced accuracy: mean of the true-positive and true-negative rates.
/// Undefined when either class is empty.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let tpr = cm
        .tpr()
        .ok_or_else(|| Error::UndefinedMetric("no positive-class records".into()))?;
    let tnr = cm
        .tnr()
        .ok_or_else(|| Error::UndefinedMetric("no negative-class records".into()))?;
    Ok(0.5 * (tpr + tnr))
}

/// Unweighted arithmetic mean over per-dataset balanced accuracies.
pub fn aggregate(per_dataset: &BTreeMap<String, f64>) -> Result<f64> {
    if per_dataset.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    Ok(per_dataset.values().sum::<f64>() / per_dataset.len() as f64)
}

/// Mean with sub-datasets first averaged inside their named groups.
/// Datasets not mentioned in `groups` count as their own group.
pub fn aggregate_grouped(
    per_dataset: &BTreeMap<String, f64>,
    groups: &BTreeMap<String, Vec<String>>,
) -> Result<f64> {
    if per_dataset.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    let mut grouped: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    'outer: for (name, value) in per_dataset {
        for (group, members) in groups {
            if members.contains(name) {
                grouped.entry(group.clone()).or_default().push(*value);
                continue 'outer;
            }
        }
        grouped.entry(name.clone()).or_default().push(*value);
    }
    let means: Vec<f64> = grouped
        .values()
        .map(|vs| vs.iter().sum::<f64>() / vs.len() as f64)
        .collect();
    Ok(means.iter().sum::<f64>() / means.len() as f64)
}

/// Judge-scored justification quality: relevance, coherence, consistency
/// on 1-5, fluency on 1-3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GEvalScore {
    pub relevance: f64,
    pub coherence: f64,
    pub consistency: f64,
    pub fluency: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GEvalPrompts {
    pub relevance: String,
    pub coherence: String,
    pub consistency: String,
    pub fluency: String,
}

impl GEvalPrompts {
    pub fn builtin() -> Self {
        serde_json::from_str(include_str!("../data/geval_prompts.json"))
            .expect("bundled judged-scoring prompts are valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

fn render_dimension_prompt(template: &str, document: &str, claim: &str, justification: &str) -> String {
    template
        .replace("{document}", document)
        .replace("{claim}", claim)
        .replace("{justification}", justification)
}

fn number_pattern() -> &'static regex::Regex {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r"-?\d+(?:\.\d+)?").unwrap())
}

/// Pull the first number out of a judge reply and clamp it to the scale.
fn parse_dimension_score(raw: &str, scale: (f64, f64)) -> Option<f64> {
    let m = number_pattern().find(raw)?;
    let value: f64 = m.as_str().parse().ok()?;
    if value < scale.0 || value > scale.1 {
        log::warn!("judge score {value} outside {scale:?}, clamping");
    }
    Some(value.clamp(scale.0, scale.1))
}

/// Score one justification on all four dimensions. A non-numeric judge
/// reply on any dimension drops the record from the averages.
pub fn geval_justification(
    document: &str,
    claim: &str,
    justification: &str,
    judge: &dyn ChatClient,
    params: &InferenceParams,
    prompts: &GEvalPrompts,
) -> std::result::Result<GEvalScore, String> {
    let mut score = |template: &str, scale: (f64, f64), name: &str| {
        let prompt = render_dimension_prompt(template, document, claim, justification);
        let request = ChatRequest::user("judge", prompt, params.clone());
        let response = judge
            .complete(&request)
            .map_err(|e| format!("{name}: judge unavailable ({})", e.kind))?;
        parse_dimension_score(&response.content, scale)
            .ok_or_else(|| format!("{name}: non-numeric judge output"))
    };
    Ok(GEvalScore {
        relevance: score(&prompts.relevance, (1.0, 5.0), "relevance")?,
        coherence: score(&prompts.coherence, (1.0, 5.0), "coherence")?,
        consistency: score(&prompts.consistency, (1.0, 5.0), "consistency")?,
        fluency: score(&prompts.fluency, (1.0, 3.0), "fluency")?,
    })
}

/// A recorded-predictions row: gold and predicted labels for one record,
/// no model call needed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionMapping {
    pub id_field: String,
    pub gold_field: String,
    pub predicted_field: String,
}

impl Default for PredictionMapping {
    fn default() -> Self {
        PredictionMapping {
            id_field: "record_id".into(),
            gold_field: "gold".into(),
            predicted_field: "predicted".into(),
        }
    }
}

/// Ingest a recorded-predictions file into verdicts, so matrices and
/// balanced accuracy can be recomputed without re-running a model.
pub fn load_predictions(path: &Path, mapping: &PredictionMapping) -> Result<Vec<EvalVerdict>> {
    let rows: Vec<serde_json::Value> = io::read_jsonl(path)?;
    let mut verdicts = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let gold = match row.get(&mapping.gold_field).and_then(|v| v.as_str()) {
            Some("grounded") => Label::Grounded,
            Some("hallucinated") => Label::Hallucinated,
            other => {
                return Err(Error::InvalidInput(format!(
                    "{}:{}: bad gold label {other:?}",
                    path.display(),
                    i + 1
                )))
            }
        };
        let predicted = match row.get(&mapping.predicted_field).and_then(|v| v.as_str()) {
            Some("grounded") => Prediction::Grounded,
            Some("hallucinated") => Prediction::Hallucinated,
            Some("invalid") => Prediction::Invalid,
            other => {
                return Err(Error::InvalidInput(format!(
                    "{}:{}: bad predicted label {other:?}",
                    path.display(),
                    i + 1
                )))
            }
        };
        let record_id = row
            .get(&mapping.id_field)
            .and_then(|v| v.as_str())
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("rec-{i}"));
        verdicts.push(EvalVerdict {
            record_id,
            gold,
            predicted,
            justification: String::new(),
            reasoning_trace: String::new(),
            raw_response: String::new(),
            correct: predicted.matches(gold),
            error: None,
            geval: None,
        });
    }
    Ok(verdicts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{MockBehavior, MockClient, Mode};
    use std::io::Write;

    fn verdict(gold: Label, predicted: Prediction) -> EvalVerdict {
        EvalVerdict {
            record_id: "r".into(),
            gold,
            predicted,
            justification: String::new(),
            reasoning_trace: String::new(),
            raw_response: String::new(),
            correct: predicted.matches(gold),
            error: None,
            geval: None,
        }
    }

    #[test]
    fn load_benchmark_maps_binary_labels() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"record_id":"a","document":"D1.","claim":"C1.","label":1}}"#).unwrap();
        writeln!(f, r#"{{"record_id":"b","document":"D2.","claim":"C2.","label":0}}"#).unwrap();
        writeln!(f, r#"{{"record_id":"c","document":"D3.","claim":"C3.","label":1}}"#).unwrap();
        f.flush().unwrap();
        let (records, stats) =
            load_benchmark(f.path(), "demo", &BenchmarkMapping::default()).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(stats.loaded, 3);
        let grounded = records.iter().filter(|r| r.gold == Label::Grounded).count();
        assert_eq!(grounded, 2);
    }

    #[test]
    fn load_benchmark_skips_unknown_labels_and_empty_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"record_id":"a","document":"D.","claim":"C.","label":"maybe"}}"#).unwrap();
        f.flush().unwrap();
        let (records, stats) =
            load_benchmark(f.path(), "demo", &BenchmarkMapping::default()).unwrap();
        assert!(records.is_empty());
        assert_eq!(stats.skipped_unmappable_label, 1);

        let empty = tempfile::NamedTempFile::new().unwrap();
        let (records, _) = load_benchmark(empty.path(), "demo", &BenchmarkMapping::default()).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn classify_scores_valid_and_invalid_responses() {
        let record = BenchRecord {
            dataset: "demo".into(),
            record_id: "r1".into(),
            document: "The bridge opened in 1932.".into(),
            claim: "The bridge opened in 1932.".into(),
            gold: Label::Grounded,
        };
        let params = InferenceParams::preset(Mode::Think);
        let good = MockClient::new(MockBehavior::Fixed(
            crate::preference::render_completion(Label::Grounded, "matches", "checking"),
        ));
        let v = classify_record(&record, &good, &params);
        assert_eq!(v.predicted, Prediction::Grounded);
        assert!(v.correct);

        let prose = MockClient::new(MockBehavior::Fixed("This is clearly grounded.".into()));
        let v = classify_record(&record, &prose, &params);
        assert_eq!(v.predicted, Prediction::Invalid);
        assert!(!v.correct);

        let wrong = MockClient::new(MockBehavior::Fixed(
            crate::preference::render_completion(Label::Hallucinated, "nope", ""),
        ));
        let v = classify_record(&record, &wrong, &params);
        assert_eq!(v.predicted, Prediction::Hallucinated);
        assert!(!v.correct);

        let down = MockClient::new(MockBehavior::Fixed("x".into())).failing_first(u32::MAX);
        let v = classify_record(&record, &down, &params);
        assert_eq!(v.predicted, Prediction::Invalid);
        assert!(v.error.is_some());
    }

    #[test]
    fn confusion_definition_and_invalid_mapping() {
        let verdicts = vec![
            verdict(Label::Hallucinated, Prediction::Hallucinated),
            verdict(Label::Hallucinated, Prediction::Grounded),
            verdict(Label::Grounded, Prediction::Grounded),
        ];
        let summary = confusion(&verdicts, InvalidPolicy::WrongCell);
        assert_eq!(summary.matrix, ConfusionMatrix::new(1, 1, 1, 0));

        // invalid counts against the gold class under WrongCell
        let verdicts = vec![
            verdict(Label::Hallucinated, Prediction::Invalid),
            verdict(Label::Grounded, Prediction::Invalid),
        ];
        let summary = confusion(&verdicts, InvalidPolicy::WrongCell);
        assert_eq!(summary.matrix, ConfusionMatrix::new(0, 1, 0, 1));
        assert_eq!(summary.invalid, 2);
        // and stays out of the matrix under Exclude
        let summary = confusion(&verdicts, InvalidPolicy::Exclude);
        assert_eq!(summary.matrix.total(), 0);
        assert_eq!(summary.invalid, 2);
    }

    #[test]
    fn confusion_is_permutation_invariant() {
        let mut verdicts = vec![
            verdict(Label::Hallucinated, Prediction::Hallucinated),
            verdict(Label::Grounded, Prediction::Hallucinated),
            verdict(Label::Grounded, Prediction::Grounded),
            verdict(Label::Hallucinated, Prediction::Invalid),
            verdict(Label::Grounded, Prediction::Grounded),
        ];
        let base = confusion(&verdicts, InvalidPolicy::WrongCell).matrix;
        verdicts.reverse();
        assert_eq!(confusion(&verdicts, InvalidPolicy::WrongCell).matrix, base);
        verdicts.swap(0, 3);
        assert_eq!(confusion(&verdicts, InvalidPolicy::WrongCell).matrix, base);
    }

    #[test]
    fn balanced_accuracy_on_reference_counts() {
        let cm = ConfusionMatrix::new(984, 282, 13649, 1396);
        let bacc = balanced_accuracy(&cm).unwrap();
        assert!((cm.tpr().unwrap() - 0.777).abs() < 0.0006);
        assert!((cm.tnr().unwrap() - 0.907).abs() < 0.0003);
        assert!((bacc - 0.8422).abs() < 0.0001);
    }

    #[test]
    fn balanced_accuracy_degenerate_cases() {
        // perfect classifier
        let cm = ConfusionMatrix::new(5, 0, 7, 0);
        assert_eq!(balanced_accuracy(&cm).unwrap(), 1.0);
        // constant single-class predictor on a mixed set
        let cm = ConfusionMatrix::new(5, 0, 0, 7);
        assert_eq!(balanced_accuracy(&cm).unwrap(), 0.5);
        // empty class is undefined
        let cm = ConfusionMatrix::new(0, 0, 3, 1);
        assert!(balanced_accuracy(&cm).is_err());
    }

    /// Brute-force recomputation from raw verdict lists must agree with
    /// matrix-based balanced accuracy under the wrong-cell policy.
    #[test]
    fn balanced_accuracy_matches_per_class_oracle() {
        use rand::Rng;
        let mut rng = crate::seed::substream(17, "test.bacc");
        for _ in 0..50 {
            let n = rng.random_range(10..200);
            let verdicts: Vec<EvalVerdict> = (0..n)
                .map(|_| {
                    let gold = if rng.random_bool(0.4) {
                        Label::Hallucinated
                    } else {
                        Label::Grounded
                    };
                    let predicted = match rng.random_range(0..10) {
                        0 => Prediction::Invalid,
                        x if x < 6 => Prediction::Grounded,
                        _ => Prediction::Hallucinated,
                    };
                    verdict(gold, predicted)
                })
                .collect();
            let pos: Vec<&EvalVerdict> =
                verdicts.iter().filter(|v| v.gold == Label::Hallucinated).collect();
            let neg: Vec<&EvalVerdict> =
                verdicts.iter().filter(|v| v.gold == Label::Grounded).collect();
            if pos.is_empty() || neg.is_empty() {
                continue;
            }
            let tpr = pos.iter().filter(|v| v.correct).count() as f64 / pos.len() as f64;
            let tnr = neg.iter().filter(|v| v.correct).count() as f64 / neg.len() as f64;
            let oracle = 0.5 * (tpr + tnr);
            let summary = confusion(&verdicts, InvalidPolicy::WrongCell);
            let got = balanced_accuracy(&summary.matrix).unwrap();
            assert!((got - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregate_mean_and_fixed_point() {
        let mut m = BTreeMap::new();
        m.insert("A".to_string(), 0.8);
        m.insert("B".to_string(), 0.6);
        assert!((aggregate(&m).unwrap() - 0.7).abs() < 1e-12);
        let mut same = BTreeMap::new();
        for name in ["x", "y", "z"] {
            same.insert(name.to_string(), 0.62);
        }
        assert!((aggregate(&same).unwrap() - 0.62).abs() < 1e-12);
        let single = BTreeMap::from([("only".to_string(), 0.91)]);
        assert_eq!(aggregate(&single).unwrap(), 0.91);
        assert!(aggregate(&BTreeMap::new()).is_err());
    }

    #[test]
    fn grouped_aggregation_averages_subsets_first() {
        let mut per = BTreeMap::new();
        per.insert("alpha-1".to_string(), 0.6);
        per.insert("alpha-2".to_string(), 0.8);
        per.insert("beta".to_string(), 0.9);
        let groups = BTreeMap::from([(
            "alpha".to_string(),
            vec!["alpha-1".to_string(), "alpha-2".to_string()],
        )]);
        // (0.7 + 0.9) / 2
        assert!((aggregate_grouped(&per, &groups).unwrap() - 0.8).abs() < 1e-12);
        // without groups it degenerates to the plain mean
        assert!(
            (aggregate_grouped(&per, &BTreeMap::new()).unwrap() - aggregate(&per).unwrap()).abs()
                < 1e-12
        );
    }

    #[test]
    fn geval_parses_plain_and_labeled_numbers_and_clamps() {
        assert_eq!(parse_dimension_score("5", (1.0, 5.0)), Some(5.0));
        assert_eq!(parse_dimension_score("relevance: 4", (1.0, 5.0)), Some(4.0));
        assert_eq!(parse_dimension_score("7", (1.0, 5.0)), Some(5.0));
        assert_eq!(parse_dimension_score("score is 2.5 overall", (1.0, 5.0)), Some(2.5));
        assert_eq!(parse_dimension_score("no score here", (1.0, 5.0)), None);
    }

    #[test]
    fn geval_scores_via_mock_judge() {
        let judge = MockClient::new(MockBehavior::Fixed("4".into()));
        let params = InferenceParams::preset(Mode::NoThink);
        let prompts = GEvalPrompts::builtin();
        let score =
            geval_justification("Doc.", "Claim.", "Because the text says so.", &judge, &params, &prompts)
                .unwrap();
        assert_eq!(score.relevance, 4.0);
        assert_eq!(score.fluency, 3.0, "clamped to the 1-3 fluency scale");

        let chatty = MockClient::new(MockBehavior::Fixed("no digits".into()));
        assert!(geval_justification("D", "C", "J", &chatty, &params, &prompts).is_err());
    }

    #[test]
    fn recorded_predictions_roundtrip() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"record_id":"a","gold":"hallucinated","predicted":"hallucinated"}}"#).unwrap();
        writeln!(f, r#"{{"record_id":"b","gold":"grounded","predicted":"invalid"}}"#).unwrap();
        f.flush().unwrap();
        let verdicts = load_predictions(f.path(), &PredictionMapping::default()).unwrap();
        assert_eq!(verdicts.len(), 2);
        assert!(verdicts[0].correct);
        assert!(!verdicts[1].correct);
        let summary = confusion(&verdicts, InvalidPolicy::WrongCell);
        assert_eq!(summary.matrix, ConfusionMatrix::new(1, 0, 0, 1));
    }
}
