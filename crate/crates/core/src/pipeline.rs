//! Stage orchestration: each pipeline stage runs exactly once per input,
//! records a manifest, and is skipped when nothing it depends on changed.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::claims::{generate_claims, ClaimTriplet};
use crate::client::Mode;
use crate::config::PipelineConfig;
use crate::corpus::{exact_dedup, gate_language, load_corpus, sample_uniform, Document};
use crate::curation::{curate, CurationContext, QualityConfig, WordList};
use crate::error::{Error, Result};
use crate::eval::{
    classify_record, geval_justification, load_benchmark, EvalVerdict, GEvalPrompts, GEvalScore,
    InvalidPolicy,
};
use crate::io;
use crate::manifest::{config_digest, digest_inputs, digest_outputs, StageManifest};
use crate::preference::{
    agreement_verify, build_classification_prompt, builtin_fewshot_examples,
    export_preference_dataset, generate_pair, load_fewshot_examples, AgreementOutcome,
    ConsensusDrop, JudgePick, PreferenceTuple, PresentationOrder,
};
use crate::reformation::{reform_all, StyleRegistry};
use crate::seed::substream;

pub const FILE_AGNOSTIC: &str = "agnostic.jsonl";
pub const FILE_INGEST_STATS: &str = "ingest_stats.json";
pub const FILE_CLEAN: &str = "clean.jsonl";
pub const FILE_CURATION_REPORT: &str = "curation_report.json";
pub const FILE_REFORMED: &str = "reformed.jsonl";
pub const FILE_REFORM_STATS: &str = "reform_stats.json";
pub const FILE_CLAIMS: &str = "claims.jsonl";
pub const FILE_CLAIM_STATS: &str = "claim_stats.json";
pub const FILE_TUPLES_RAW: &str = "tuples_raw.jsonl";
pub const FILE_PREF_STATS: &str = "pref_stats.json";
pub const FILE_TUPLES_FILTERED: &str = "tuples_filtered.jsonl";
pub const FILE_AUDIT: &str = "audit.jsonl";
pub const FILE_FILTER_STATS: &str = "filter_stats.json";
pub const FILE_EXPORT: &str = "preferences.jsonl";
pub const FILE_EVAL_STATS: &str = "eval_stats.json";
pub const FILE_REPORT_JSON: &str = "report.json";
pub const FILE_REPORT_TXT: &str = "report.txt";

pub fn verdicts_file(dataset: &str) -> String {
    format!("verdicts_{dataset}.jsonl")
}

/// Run a fallible-free job over items with bounded parallelism, committing
/// results in input order.
pub fn run_ordered<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| items.par_iter().map(f).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StageName {
    Ingest,
    Curate,
    Reform,
    Claims,
    Prefs,
    Filter,
    Export,
    Eval,
    Report,
}

impl StageName {
    pub fn as_str(&self) -> &'static str {
        match self {
            StageName::Ingest => "ingest",
            StageName::Curate => "curate",
            StageName::Reform => "reform",
            StageName::Claims => "claims",
            StageName::Prefs => "prefs",
            StageName::Filter => "filter",
            StageName::Export => "export",
            StageName::Eval => "eval",
            StageName::Report => "report",
        }
    }

    pub fn upstream(&self) -> Option<StageName> {
        match self {
            StageName::Ingest => None,
            StageName::Curate => Some(StageName::Ingest),
            StageName::Reform => Some(StageName::Curate),
            StageName::Claims => Some(StageName::Reform),
            StageName::Prefs => Some(StageName::Claims),
            StageName::Filter => Some(StageName::Prefs),
            StageName::Export => Some(StageName::Filter),
            StageName::Eval => None,
            StageName::Report => Some(StageName::Eval),
        }
    }

    /// The data-pipeline stages run by `all`, in order.
    pub fn pipeline_order() -> [StageName; 7] {
        [
            StageName::Ingest,
            StageName::Curate,
            StageName::Reform,
            StageName::Claims,
            StageName::Prefs,
            StageName::Filter,
            StageName::Export,
        ]
    }
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ingest" => Ok(StageName::Ingest),
            "curate" => Ok(StageName::Curate),
            "reform" => Ok(StageName::Reform),
            "claims" => Ok(StageName::Claims),
            "prefs" => Ok(StageName::Prefs),
            "filter" => Ok(StageName::Filter),
            "export" => Ok(StageName::Export),
            "eval" => Ok(StageName::Eval),
            "report" => Ok(StageName::Report),
            other => Err(Error::InvalidInput(format!("unknown stage `{other}`"))),
        }
    }
}

/// Per-invocation switches, including the ablation flags.
#[derive(Debug, Clone, Default)]
pub struct StageOptions {
    pub force: bool,
    /// Skip consensus judging; tuples pass through with audit only.
    pub no_consensus_filter: bool,
    /// Evaluate only these datasets (empty = all configured).
    pub datasets: Vec<String>,
    /// Endpoint slot evaluated by the harness (default `subject`).
    pub eval_endpoint: Option<String>,
    /// Override the evaluated model's inference mode.
    pub mode_override: Option<Mode>,
    pub invalid_policy: Option<InvalidPolicy>,
    /// Also score justifications with the judge endpoint during eval.
    pub geval: bool,
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub manifest: StageManifest,
    pub executed: bool,
}

struct StagePlan {
    inputs: BTreeMap<String, String>,
    config_digest: String,
}

fn wordlist_digest(config: &PipelineConfig) -> Result<String> {
    match &config.paths.wordlist {
        Some(path) => io::file_digest(path),
        None => Ok(format!(
            "builtin:{}",
            io::sha256_hex(crate::curation::BUILTIN_WORDLIST.as_bytes())
        )),
    }
}

fn styles_digest(config: &PipelineConfig) -> Result<String> {
    match &config.paths.styles {
        Some(path) => io::file_digest(path),
        None => Ok(format!(
            "builtin:{}",
            io::sha256_hex(crate::reformation::BUILTIN_STYLES.as_bytes())
        )),
    }
}

fn fewshot_digest(config: &PipelineConfig) -> Result<String> {
    match &config.paths.fewshot {
        Some(path) => io::file_digest(path),
        None => Ok(format!(
            "builtin:{}",
            io::sha256_hex(crate::preference::BUILTIN_FEWSHOT.as_bytes())
        )),
    }
}

fn plan(stage: StageName, config: &PipelineConfig, opts: &StageOptions) -> Result<StagePlan> {
    let work = |name: &str| config.work_path(name);
    let (inputs, params) = match stage {
        StageName::Ingest => (
            digest_inputs(&[("corpus", &config.paths.corpus)])?,
            serde_json::json!({
                "seed": config.seed,
                "language": config.thresholds.language,
                "sample_size": config.sample.size,
                "fields": config.fields,
            }),
        ),
        StageName::Curate => {
            let mut inputs = digest_inputs(&[("agnostic", &work(FILE_AGNOSTIC))])?;
            inputs.insert("wordlist".into(), wordlist_digest(config)?);
            (
                inputs,
                serde_json::json!({
                    "thresholds": config.thresholds,
                    "boilerplate": config.boilerplate_phrases,
                }),
            )
        }
        StageName::Reform => {
            let mut inputs = digest_inputs(&[("clean", &work(FILE_CLEAN))])?;
            inputs.insert("styles".into(), styles_digest(config)?);
            (
                inputs,
                serde_json::json!({
                    "seed": config.seed,
                    "endpoint": config.endpoint("dr")?,
                    "concurrency": config.concurrency.requests,
                }),
            )
        }
        StageName::Claims => (
            digest_inputs(&[("reformed", &work(FILE_REFORMED))])?,
            serde_json::json!({
                "seed": config.seed,
                "quotas": config.quotas,
                "endpoint": config.endpoint("cg")?,
            }),
        ),
        StageName::Prefs => (
            digest_inputs(&[("claims", &work(FILE_CLAIMS))])?,
            serde_json::json!({
                "pg_large": config.endpoint("pg_large")?,
                "pg_small": config.endpoint("pg_small")?,
            }),
        ),
        StageName::Filter => {
            let mut inputs = digest_inputs(&[("tuples_raw", &work(FILE_TUPLES_RAW))])?;
            inputs.insert("fewshot".into(), fewshot_digest(config)?);
            let judges = if opts.no_consensus_filter {
                serde_json::Value::Null
            } else {
                serde_json::json!({
                    "ie1": config.endpoint("ie1")?,
                    "ie2": config.endpoint("ie2")?,
                })
            };
            (
                inputs,
                serde_json::json!({
                    "seed": config.seed,
                    "judges": judges,
                    "no_consensus_filter": opts.no_consensus_filter,
                }),
            )
        }
        StageName::Export => (
            digest_inputs(&[("tuples_filtered", &work(FILE_TUPLES_FILTERED))])?,
            serde_json::json!({}),
        ),
        StageName::Eval => {
            let datasets = selected_datasets(config, opts)?;
            let mut files: Vec<(&str, &Path)> = Vec::new();
            for name in &datasets {
                files.push((name.as_str(), &config.benchmarks[name.as_str()].path));
            }
            let slot = opts.eval_endpoint.as_deref().unwrap_or("subject");
            (
                digest_inputs(&files)?,
                serde_json::json!({
                    "endpoint_slot": slot,
                    "endpoint": config.endpoint(slot)?,
                    "mode_override": opts.mode_override,
                    "datasets": datasets,
                    "geval": opts.geval,
                    "judge": if opts.geval { Some(config.endpoint("judge")?) } else { None },
                    "benchmarks": datasets.iter().map(|d| &config.benchmarks[d.as_str()]).collect::<Vec<_>>(),
                }),
            )
        }
        StageName::Report => {
            let datasets = selected_datasets(config, opts)?;
            let mut inputs = BTreeMap::new();
            for name in &datasets {
                let path = work(&verdicts_file(name));
                let digest = if path.exists() {
                    io::file_digest(&path)?
                } else {
                    "absent".to_string()
                };
                inputs.insert(name.clone(), digest);
            }
            (
                inputs,
                serde_json::json!({
                    "datasets": datasets,
                    "invalid_policy": opts.invalid_policy.unwrap_or(config.report.invalid_policy),
                    "groups": config.report.groups,
                }),
            )
        }
    };
    Ok(StagePlan {
        inputs,
        config_digest: config_digest(&params),
    })
}

fn selected_datasets(config: &PipelineConfig, opts: &StageOptions) -> Result<Vec<String>> {
    if opts.datasets.is_empty() {
        return Ok(config.benchmarks.keys().cloned().collect());
    }
    for name in &opts.datasets {
        if !config.benchmarks.contains_key(name) {
            return Err(Error::Config(format!("benchmark `{name}` is not configured")));
        }
    }
    Ok(opts.datasets.clone())
}

fn check_upstream(stage: StageName, config: &PipelineConfig, opts: &StageOptions) -> Result<()> {
    let Some(upstream) = stage.upstream() else {
        return Ok(());
    };
    let manifest = StageManifest::load(&config.paths.work_dir, upstream.as_str())?.ok_or(
        Error::MissingUpstream {
            stage: stage.as_str().into(),
            upstream: upstream.as_str().into(),
        },
    )?;
    for (name, recorded) in &manifest.outputs {
        let path = Path::new(name);
        let current = if path.exists() {
            io::file_digest(path)?
        } else {
            "absent".to_string()
        };
        if &current != recorded {
            let detail = format!(
                "output {name} of upstream stage `{}` changed since its manifest was written",
                upstream.as_str()
            );
            if opts.force {
                log::warn!("{detail}; continuing under --force");
            } else {
                return Err(Error::DigestMismatch {
                    stage: stage.as_str().into(),
                    detail,
                });
            }
        }
    }
    Ok(())
}

/// Run one stage. Reruns happen iff an input, output, or config digest
/// changed; an intact manifest makes the call a no-op.
pub fn run_stage(
    stage: StageName,
    config: &PipelineConfig,
    opts: &StageOptions,
) -> Result<StageOutcome> {
    std::fs::create_dir_all(&config.paths.work_dir)
        .map_err(|e| Error::io(&config.paths.work_dir, e))?;
    check_upstream(stage, config, opts)?;
    let plan = plan(stage, config, opts)?;
    if let Some(existing) = StageManifest::load(&config.paths.work_dir, stage.as_str())? {
        if existing.is_current(&plan.inputs, &plan.config_digest) {
            log::info!("stage {stage}: up to date, skipping");
            return Ok(StageOutcome {
                manifest: existing,
                executed: false,
            });
        }
    }
    log::info!("stage {stage}: running");
    let (outputs, counts) = match stage {
        StageName::Ingest => stage_ingest(config)?,
        StageName::Curate => stage_curate(config)?,
        StageName::Reform => stage_reform(config)?,
        StageName::Claims => stage_claims(config)?,
        StageName::Prefs => stage_prefs(config)?,
        StageName::Filter => stage_filter(config, opts)?,
        StageName::Export => stage_export(config)?,
        StageName::Eval => stage_eval(config, opts)?,
        StageName::Report => stage_report(config, opts)?,
    };
    let mut manifest = StageManifest::new(stage.as_str());
    manifest.inputs = plan.inputs;
    manifest.config_digest = plan.config_digest;
    manifest.outputs = digest_outputs(&outputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    manifest.counts = counts;
    manifest.write(&config.paths.work_dir)?;
    Ok(StageOutcome {
        manifest,
        executed: true,
    })
}

/// Run the data pipeline end to end. A failing stage stops the run and
/// leaves all upstream manifests intact.
pub fn run_all(config: &PipelineConfig, opts: &StageOptions) -> Result<Vec<StageOutcome>> {
    let mut outcomes = Vec::new();
    for stage in StageName::pipeline_order() {
        outcomes.push(run_stage(stage, config, opts)?);
    }
    Ok(outcomes)
}

type StageResult = Result<(Vec<PathBuf>, BTreeMap<String, u64>)>;

#[derive(Serialize)]
struct IngestStats {
    records_read: usize,
    loaded: usize,
    skipped_malformed: usize,
    skipped_missing_text: usize,
    dropped_language: usize,
    dropped_duplicate: usize,
    available_for_sample: usize,
    sampled: usize,
}

fn stage_ingest(config: &PipelineConfig) -> StageResult {
    let (docs, load_stats) = load_corpus(&config.paths.corpus, &config.fields)?;
    let before_gate = docs.len();
    let gated: Vec<Document> = docs
        .into_iter()
        .filter(|d| gate_language(d, config.thresholds.language))
        .collect();
    let dropped_language = before_gate - gated.len();
    let (deduped, dropped_duplicate) = exact_dedup(gated);
    let available = deduped.len();
    let sampled = sample_uniform(deduped, config.sample.size, config.seed)?;

    let stats = IngestStats {
        records_read: load_stats.records_read,
        loaded: load_stats.loaded,
        skipped_malformed: load_stats.skipped_malformed,
        skipped_missing_text: load_stats.skipped_missing_text,
        dropped_language,
        dropped_duplicate,
        available_for_sample: available,
        sampled: sampled.len(),
    };
    let out = config.work_path(FILE_AGNOSTIC);
    let stats_path = config.work_path(FILE_INGEST_STATS);
    io::write_jsonl(&out, &sampled)?;
    io::write_json_pretty(&stats_path, &stats)?;
    let counts = BTreeMap::from([
        ("loaded".to_string(), stats.loaded as u64),
        ("skipped".to_string(), load_stats.skipped() as u64),
        ("dropped_language".to_string(), dropped_language as u64),
        ("dropped_duplicate".to_string(), dropped_duplicate as u64),
        ("sampled".to_string(), sampled.len() as u64),
    ]);
    Ok((vec![out, stats_path], counts))
}

fn load_wordlist(config: &PipelineConfig) -> Result<WordList> {
    match &config.paths.wordlist {
        Some(path) => WordList::load(path),
        None => crate::curation::builtin_wordlist(),
    }
}

fn stage_curate(config: &PipelineConfig) -> StageResult {
    let docs: Vec<Document> = io::read_jsonl(&config.work_path(FILE_AGNOSTIC))?;
    let ctx = CurationContext {
        wordlist: load_wordlist(config)?,
        quality: QualityConfig {
            min_sentences: config.thresholds.min_sentences,
            max_token_len: config.thresholds.max_token_len,
            min_line_words: config.thresholds.min_line_words,
            boilerplate_phrases: config.boilerplate_phrases.clone(),
        },
        min_words: config.thresholds.min_words,
        shingle_size: config.thresholds.shingle_size,
        splitter: Default::default(),
    };
    let (clean, report) = curate(docs, &ctx);
    if !report.reconciles() {
        return Err(Error::InvariantBreach("curation report does not reconcile".into()));
    }
    let out = config.work_path(FILE_CLEAN);
    let report_path = config.work_path(FILE_CURATION_REPORT);
    io::write_jsonl(&out, &clean)?;
    io::write_json_pretty(&report_path, &report)?;
    let counts = BTreeMap::from([
        ("input".to_string(), report.input_count as u64),
        ("dropped_unsafe".to_string(), report.dropped_unsafe as u64),
        ("dropped_quality".to_string(), report.dropped_quality as u64),
        ("dropped_short".to_string(), report.dropped_short as u64),
        ("dropped_near_dup".to_string(), report.dropped_near_dup as u64),
        ("retained".to_string(), report.retained as u64),
    ]);
    Ok((vec![out, report_path], counts))
}

fn load_styles(config: &PipelineConfig) -> Result<StyleRegistry> {
    match &config.paths.styles {
        Some(path) => StyleRegistry::load(path),
        None => Ok(StyleRegistry::builtin()),
    }
}

fn stage_reform(config: &PipelineConfig) -> StageResult {
    let docs: Vec<Document> = io::read_jsonl(&config.work_path(FILE_CLEAN))?;
    let registry = load_styles(config)?;
    let (client, params) = config.client("dr")?;
    let mut rng = substream(config.seed, "reform");
    let (records, stats) = reform_all(
        &docs,
        &registry,
        &client,
        &params,
        &mut rng,
        config.concurrency.requests,
    );
    let out = config.work_path(FILE_REFORMED);
    let stats_path = config.work_path(FILE_REFORM_STATS);
    io::write_jsonl(&out, &records)?;
    io::write_json_pretty(&stats_path, &stats)?;
    let counts = BTreeMap::from([
        ("attempted".to_string(), stats.attempted as u64),
        ("reformed".to_string(), stats.reformed as u64),
        ("skipped_empty".to_string(), stats.skipped_empty as u64),
        (
            "skipped_client_error".to_string(),
            stats.skipped_client_error as u64,
        ),
    ]);
    Ok((vec![out, stats_path], counts))
}

fn stage_claims(config: &PipelineConfig) -> StageResult {
    let records: Vec<crate::reformation::ReformRecord> =
        io::read_jsonl(&config.work_path(FILE_REFORMED))?;
    let docs: Vec<Document> = records.iter().map(|r| r.to_document()).collect();
    let (client, params) = config.client("cg")?;
    let mut rng = substream(config.seed, "claims");
    let (triplets, stats) = generate_claims(
        &docs,
        &config.quotas,
        &client,
        &params,
        &mut rng,
        config.concurrency.requests,
    );
    let out = config.work_path(FILE_CLAIMS);
    let stats_path = config.work_path(FILE_CLAIM_STATS);
    io::write_jsonl(&out, &triplets)?;
    io::write_json_pretty(&stats_path, &stats)?;
    let counts = BTreeMap::from([
        ("documents".to_string(), docs.len() as u64),
        ("generated".to_string(), stats.generated.total() as u64),
        ("skipped".to_string(), stats.skipped.total() as u64),
        ("grounded".to_string(), stats.generated.grounded as u64),
        ("intrinsic".to_string(), stats.generated.intrinsic as u64),
        ("extrinsic".to_string(), stats.generated.extrinsic as u64),
    ]);
    Ok((vec![out, stats_path], counts))
}

#[derive(Serialize)]
struct PrefStats {
    input: usize,
    generated: usize,
    skipped_client_error: usize,
    rejected_unparseable: usize,
}

fn stage_prefs(config: &PipelineConfig) -> StageResult {
    let triplets: Vec<ClaimTriplet> = io::read_jsonl(&config.work_path(FILE_CLAIMS))?;
    let (pg_large, params_large) = config.client("pg_large")?;
    let (pg_small, params_small) = config.client("pg_small")?;
    for (slot, params) in [("pg_large", &params_large), ("pg_small", &params_small)] {
        if params.mode != Mode::Think {
            log::warn!("{slot} is not configured in think mode; completions will lack traces");
        }
    }
    let results: Vec<std::result::Result<PreferenceTuple, String>> =
        run_ordered(&triplets, config.concurrency.requests, |triplet| {
            let prompt = build_classification_prompt(&triplet.document, &triplet.claim.text)
                .map_err(|e| e.to_string())?;
            generate_pair(
                &prompt,
                triplet.claim.kind.label(),
                &triplet.doc_id,
                &pg_large,
                &params_large,
                &pg_small,
                &params_small,
            )
        });
    let mut stats = PrefStats {
        input: triplets.len(),
        generated: 0,
        skipped_client_error: 0,
        rejected_unparseable: 0,
    };
    let mut tuples = Vec::with_capacity(triplets.len());
    for result in results {
        match result {
            Ok(tuple) => {
                stats.generated += 1;
                if tuple.rejected.predicted.is_none() {
                    stats.rejected_unparseable += 1;
                }
                tuples.push(tuple);
            }
            Err(reason) => {
                stats.skipped_client_error += 1;
                log::warn!("preference pair skipped: {reason}");
            }
        }
    }
    let out = config.work_path(FILE_TUPLES_RAW);
    let stats_path = config.work_path(FILE_PREF_STATS);
    io::write_jsonl(&out, &tuples)?;
    io::write_json_pretty(&stats_path, &stats)?;
    let counts = BTreeMap::from([
        ("input".to_string(), stats.input as u64),
        ("generated".to_string(), stats.generated as u64),
        ("skipped".to_string(), stats.skipped_client_error as u64),
    ]);
    Ok((vec![out, stats_path], counts))
}

/// One audit-trail row per tuple, keyed by document id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRow {
    pub doc_id: String,
    pub synthetic_label: crate::claims::Label,
    pub agreement_passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement_drop: Option<AgreementOutcome>,
    pub rejected_unparseable: bool,
    pub consensus_skipped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge1_pick: Option<JudgePick>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge2_pick: Option<JudgePick>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub presentation_order: Option<PresentationOrder>,
    pub consensus_passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consensus_drop: Option<ConsensusDrop>,
    pub kept: bool,
}

#[derive(Debug, Default, Serialize)]
struct FilterStats {
    input: usize,
    agreement_kept: usize,
    agreement_label_mismatch: usize,
    agreement_unparseable_chosen: usize,
    consensus_skipped: bool,
    consensus_kept: usize,
    consensus_split: usize,
    consensus_both_rejected: usize,
    consensus_invalid_judge_output: usize,
    consensus_judge_unavailable: usize,
    kept: usize,
}

fn load_fewshot(config: &PipelineConfig) -> Result<serde_json::Value> {
    match &config.paths.fewshot {
        Some(path) => load_fewshot_examples(path),
        None => Ok(builtin_fewshot_examples()),
    }
}

fn stage_filter(config: &PipelineConfig, opts: &StageOptions) -> StageResult {
    let tuples: Vec<PreferenceTuple> = io::read_jsonl(&config.work_path(FILE_TUPLES_RAW))?;
    let mut stats = FilterStats {
        input: tuples.len(),
        consensus_skipped: opts.no_consensus_filter,
        ..Default::default()
    };

    // agreement verification first; it needs no model calls
    let mut audited: Vec<(PreferenceTuple, AuditRow)> = Vec::with_capacity(tuples.len());
    for mut tuple in tuples {
        let outcome = agreement_verify(&tuple);
        let passed = outcome == AgreementOutcome::Keep;
        tuple.audit.agreement_passed = passed;
        match outcome {
            AgreementOutcome::Keep => stats.agreement_kept += 1,
            AgreementOutcome::DropLabelMismatch => stats.agreement_label_mismatch += 1,
            AgreementOutcome::DropUnparseableChosen => stats.agreement_unparseable_chosen += 1,
        }
        let row = AuditRow {
            doc_id: tuple.doc_id.clone(),
            synthetic_label: tuple.synthetic_label,
            agreement_passed: passed,
            agreement_drop: (!passed).then_some(outcome),
            rejected_unparseable: tuple.rejected.predicted.is_none(),
            consensus_skipped: opts.no_consensus_filter,
            judge1_pick: None,
            judge2_pick: None,
            presentation_order: None,
            consensus_passed: false,
            consensus_drop: None,
            kept: false,
        };
        audited.push((tuple, row));
    }

    if opts.no_consensus_filter {
        for (tuple, row) in &mut audited {
            if tuple.audit.agreement_passed {
                tuple.audit.consensus_passed = true;
                row.consensus_passed = true;
                row.kept = true;
            }
        }
    } else {
        let (judge1, params1) = config.client("ie1")?;
        let (judge2, params2) = config.client("ie2")?;
        let examples = load_fewshot(config)?;
        // presentation orders are drawn sequentially so runs reproduce
        let mut rng = substream(config.seed, "filter.order");
        let jobs: Vec<usize> = audited
            .iter()
            .enumerate()
            .filter(|(_, (t, _))| t.audit.agreement_passed)
            .map(|(i, _)| i)
            .collect();
        let orders: Vec<PresentationOrder> = jobs
            .iter()
            .map(|_| {
                use rand::Rng;
                if rng.random_bool(0.5) {
                    PresentationOrder::ChosenFirst
                } else {
                    PresentationOrder::RejectedFirst
                }
            })
            .collect();
        let work: Vec<(usize, PresentationOrder)> =
            jobs.into_iter().zip(orders).collect();
        let results: Vec<(usize, crate::preference::ConsensusResult)> =
            run_ordered(&work, config.concurrency.requests, |(idx, order)| {
                let (tuple, _) = &audited[*idx];
                let result = crate::preference::consensus_filter_with_order(
                    tuple, &judge1, &params1, &judge2, &params2, &examples, *order,
                );
                (*idx, result)
            });
        for (idx, result) in results {
            let (tuple, row) = &mut audited[idx];
            tuple.audit.judge1_pick = Some(result.judge1);
            tuple.audit.judge2_pick = Some(result.judge2);
            tuple.audit.presentation_order = Some(result.order);
            tuple.audit.consensus_passed = result.keep;
            row.judge1_pick = Some(result.judge1);
            row.judge2_pick = Some(result.judge2);
            row.presentation_order = Some(result.order);
            row.consensus_passed = result.keep;
            row.consensus_drop = result.drop_reason;
            row.kept = result.keep;
            match result.drop_reason {
                None => stats.consensus_kept += 1,
                Some(ConsensusDrop::JudgesSplit) => stats.consensus_split += 1,
                Some(ConsensusDrop::BothPickedRejected) => stats.consensus_both_rejected += 1,
                Some(ConsensusDrop::InvalidJudgeOutput) => {
                    stats.consensus_invalid_judge_output += 1
                }
                Some(ConsensusDrop::JudgeUnavailable) => stats.consensus_judge_unavailable += 1,
            }
        }
    }

    let kept: Vec<&PreferenceTuple> = audited
        .iter()
        .filter(|(t, _)| t.audit.agreement_passed && t.audit.consensus_passed)
        .map(|(t, _)| t)
        .collect();
    stats.kept = kept.len();
    // filter monotonicity: |kept| <= |after agreement| <= |input|
    assert!(stats.kept <= stats.agreement_kept && stats.agreement_kept <= stats.input);

    let out = config.work_path(FILE_TUPLES_FILTERED);
    let audit_path = config.work_path(FILE_AUDIT);
    let stats_path = config.work_path(FILE_FILTER_STATS);
    io::write_jsonl(&out, &kept)?;
    let rows: Vec<&AuditRow> = audited.iter().map(|(_, r)| r).collect();
    io::write_jsonl(&audit_path, &rows)?;
    io::write_json_pretty(&stats_path, &stats)?;
    let counts = BTreeMap::from([
        ("input".to_string(), stats.input as u64),
        ("after_agreement".to_string(), stats.agreement_kept as u64),
        ("kept".to_string(), stats.kept as u64),
    ]);
    Ok((vec![out, audit_path, stats_path], counts))
}

fn stage_export(config: &PipelineConfig) -> StageResult {
    let tuples: Vec<PreferenceTuple> = io::read_jsonl(&config.work_path(FILE_TUPLES_FILTERED))?;
    let out = config.work_path(FILE_EXPORT);
    let exported = export_preference_dataset(&tuples, &out)?;
    let counts = BTreeMap::from([("exported".to_string(), exported as u64)]);
    Ok((vec![out], counts))
}

#[derive(Serialize)]
struct DatasetEvalStats {
    records: usize,
    skipped_unmappable_label: usize,
    skipped_malformed: usize,
    invalid_predictions: usize,
    client_errors: usize,
    geval_scored: usize,
    geval_skipped: usize,
}

fn load_geval_prompts(config: &PipelineConfig) -> Result<GEvalPrompts> {
    match &config.paths.geval_prompts {
        Some(path) => GEvalPrompts::load(path),
        None => Ok(GEvalPrompts::builtin()),
    }
}

fn stage_eval(config: &PipelineConfig, opts: &StageOptions) -> StageResult {
    let datasets = selected_datasets(config, opts)?;
    if datasets.is_empty() {
        return Err(Error::Config("no benchmarks configured".into()));
    }
    let slot = opts.eval_endpoint.as_deref().unwrap_or("subject");
    let endpoint = config.endpoint(slot)?;
    let client = endpoint.client()?;
    let params = match opts.mode_override {
        None => endpoint.params(),
        Some(mode) => {
            let mut cfg = endpoint.clone();
            cfg.mode = mode;
            cfg.params()
        }
    };
    let judge = if opts.geval {
        let (judge, judge_params) = config.client("judge")?;
        Some((judge, judge_params, load_geval_prompts(config)?))
    } else {
        None
    };

    let mut outputs = Vec::new();
    let mut counts = BTreeMap::new();
    let mut all_stats: BTreeMap<String, DatasetEvalStats> = BTreeMap::new();
    for name in &datasets {
        let bench = &config.benchmarks[name.as_str()];
        let (records, load_stats) = load_benchmark(&bench.path, name, &bench.mapping)?;
        let mut verdicts: Vec<EvalVerdict> =
            run_ordered(&records, config.concurrency.requests, |record| {
                classify_record(record, &client, &params)
            });
        let mut geval_scored = 0usize;
        let mut geval_skipped = 0usize;
        if let Some((judge, judge_params, prompts)) = &judge {
            let scores: Vec<Option<GEvalScore>> =
                run_ordered(&verdicts.iter().zip(&records).collect::<Vec<_>>(),
                    config.concurrency.requests,
                    |(verdict, record)| {
                        if verdict.justification.trim().is_empty() {
                            return None;
                        }
                        geval_justification(
                            &record.document,
                            &record.claim,
                            &verdict.justification,
                            judge,
                            judge_params,
                            prompts,
                        )
                        .ok()
                    });
            for (verdict, score) in verdicts.iter_mut().zip(scores) {
                match score {
                    Some(s) => {
                        verdict.geval = Some(s);
                        geval_scored += 1;
                    }
                    None => geval_skipped += 1,
                }
            }
        }
        let invalid = verdicts
            .iter()
            .filter(|v| v.predicted == crate::eval::Prediction::Invalid)
            .count();
        let client_errors = verdicts.iter().filter(|v| v.error.is_some()).count();
        let out = config.work_path(&verdicts_file(name));
        io::write_jsonl(&out, &verdicts)?;
        outputs.push(out);
        counts.insert(format!("{name}_records"), verdicts.len() as u64);
        counts.insert(format!("{name}_invalid"), invalid as u64);
        all_stats.insert(
            name.clone(),
            DatasetEvalStats {
                records: verdicts.len(),
                skipped_unmappable_label: load_stats.skipped_unmappable_label,
                skipped_malformed: load_stats.skipped_malformed,
                invalid_predictions: invalid,
                client_errors,
                geval_scored,
                geval_skipped,
            },
        );
    }
    let stats_path = config.work_path(FILE_EVAL_STATS);
    io::write_json_pretty(&stats_path, &all_stats)?;
    outputs.push(stats_path);
    Ok((outputs, counts))
}

fn stage_report(config: &PipelineConfig, opts: &StageOptions) -> StageResult {
    let datasets = selected_datasets(config, opts)?;
    let policy = opts.invalid_policy.unwrap_or(config.report.invalid_policy);
    let mut per_dataset = Vec::new();
    for name in &datasets {
        let path = config.work_path(&verdicts_file(name));
        if !path.exists() {
            log::warn!("no verdicts for dataset {name}; skipping in report");
            continue;
        }
        let verdicts: Vec<EvalVerdict> = io::read_jsonl(&path)?;
        per_dataset.push((name.clone(), verdicts));
    }
    if per_dataset.is_empty() {
        return Err(Error::Config("report: no verdict files found; run eval first".into()));
    }
    let report = crate::report::build_report(&per_dataset, policy, &config.report.groups)?;
    let json_path = config.work_path(FILE_REPORT_JSON);
    let txt_path = config.work_path(FILE_REPORT_TXT);
    io::write_json_pretty(&json_path, &report)?;
    io::write_atomic(&txt_path, crate::report::render_table(&report).as_bytes())?;
    let mut counts = BTreeMap::new();
    for ds in &report.datasets {
        counts.insert(format!("{}_records", ds.name), ds.records as u64);
    }
    Ok((vec![json_path, txt_path], counts))
}
