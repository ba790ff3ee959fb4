//! Run configuration: one TOML file, every field overridable with
//! `--set dotted.path=value`, secrets via environment variables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::claims::Quotas;
use crate::client::{ChatClient, HttpEndpoint, InferenceParams, MockBehavior, MockClient, Mode};
use crate::corpus::FieldMap;
use crate::error::{Error, Result};
use crate::eval::{BenchmarkMapping, InvalidPolicy};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Raw corpus input (line-delimited records).
    pub corpus: PathBuf,
    /// Directory for stage outputs and manifests.
    pub work_dir: PathBuf,
    /// Pinned unsafe-term snapshot; one term per line.
    pub wordlist: Option<PathBuf>,
    /// Style registry override; defaults to the bundled set.
    pub styles: Option<PathBuf>,
    /// Few-shot examples for the pairwise judging prompt.
    pub fewshot: Option<PathBuf>,
    /// Dimension prompt templates for justification scoring.
    pub geval_prompts: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: PathBuf::from("corpus.jsonl"),
            work_dir: PathBuf::from("work"),
            wordlist: None,
            styles: None,
            fewshot: None,
            geval_prompts: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub language: f64,
    pub min_words: usize,
    pub min_sentences: usize,
    pub max_token_len: usize,
    pub shingle_size: usize,
    pub min_line_words: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            language: 0.95,
            min_words: 50,
            min_sentences: 5,
            max_token_len: 1000,
            shingle_size: 3,
            min_line_words: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    /// Sample size drawn after the language gate and exact dedup.
    pub size: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { size: 250_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Concurrency {
    /// Bound on in-flight model requests per stage.
    pub requests: usize,
}

impl Default for Concurrency {
    fn default() -> Self {
        Concurrency { requests: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    Http,
    Mock,
}

/// One endpoint slot. Slots are named for their role in the pipeline:
/// `dr` (reformer), `cg` (claim generator), `pg_large`/`pg_small`
/// (preference generators), `ie1`/`ie2` (pairwise judges), `judge`
/// (justification scoring), `subject` (model under evaluation).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub kind: EndpointKind,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// Mock behavior name (`reformer`, `claim_writer`, `classifier_strong`,
    /// `classifier_weak`, `judge_primary`, `judge_secondary`, `echo`,
    /// `fixed:<text>`) or `script` with a script path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_retries: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<u64>,
}

fn default_mode() -> Mode {
    Mode::NoThink
}

impl EndpointConfig {
    /// Sampling parameters: the mode preset with any explicit overrides.
    pub fn params(&self) -> InferenceParams {
        let mut p = InferenceParams::preset(self.mode);
        if let Some(t) = self.temperature {
            p.temperature = t;
        }
        if let Some(t) = self.top_p {
            p.top_p = t;
        }
        if let Some(t) = self.top_k {
            p.top_k = t;
        }
        if let Some(t) = self.min_p {
            p.min_p = t;
        }
        if let Some(r) = self.max_retries {
            p.max_retries = r;
        }
        if let Some(s) = self.timeout_secs {
            p.timeout = Duration::from_secs(s);
        }
        p
    }

    pub fn client(&self) -> Result<Box<dyn ChatClient>> {
        match self.kind {
            EndpointKind::Http => {
                let base_url = self
                    .base_url
                    .as_deref()
                    .ok_or_else(|| Error::Config("http endpoint needs base_url".into()))?;
                let model = self
                    .model
                    .as_deref()
                    .ok_or_else(|| Error::Config("http endpoint needs model".into()))?;
                let api_key = match &self.api_key_env {
                    None => None,
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        Error::Config(format!("environment variable {var} is not set"))
                    })?),
                };
                Ok(Box::new(HttpEndpoint::new(base_url, model, api_key)?))
            }
            EndpointKind::Mock => {
                if let Some(script) = &self.script {
                    return Ok(Box::new(MockClient::from_script_file(script)?));
                }
                let behavior = self
                    .behavior
                    .as_deref()
                    .ok_or_else(|| Error::Config("mock endpoint needs behavior or script".into()))?;
                Ok(Box::new(MockClient::new(MockBehavior::from_name(behavior)?)))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub path: PathBuf,
    #[serde(default, flatten)]
    pub mapping: BenchmarkMapping,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Optional dataset grouping for the macro average: sub-datasets are
    /// averaged inside their group first.
    pub groups: BTreeMap<String, Vec<String>>,
    pub invalid_policy: InvalidPolicy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub fields: FieldMap,
    pub thresholds: Thresholds,
    pub sample: SampleConfig,
    pub quotas: Quotas,
    pub concurrency: Concurrency,
    pub boilerplate_phrases: Vec<String>,
    pub endpoints: BTreeMap<String, EndpointConfig>,
    pub benchmarks: BTreeMap<String, BenchmarkConfig>,
    pub report: ReportConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: Paths::default(),
            fields: FieldMap::default(),
            thresholds: Thresholds::default(),
            sample: SampleConfig::default(),
            quotas: Quotas::default(),
            concurrency: Concurrency::default(),
            boilerplate_phrases: crate::curation::default_boilerplate_phrases(),
            endpoints: BTreeMap::new(),
            benchmarks: BTreeMap::new(),
            report: ReportConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Load a TOML config, apply `--set dotted.path=value` overrides, and
    /// resolve relative paths against the config file's directory.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut value: toml::Value = raw
            .parse()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for (key, val) in overrides {
            apply_override(&mut value, key, val)?;
        }
        let mut config: PipelineConfig = value
            .try_into()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        fix(&mut self.paths.corpus);
        fix(&mut self.paths.work_dir);
        for opt in [
            &mut self.paths.wordlist,
            &mut self.paths.styles,
            &mut self.paths.fewshot,
            &mut self.paths.geval_prompts,
        ] {
            if let Some(p) = opt {
                fix(p);
            }
        }
        for endpoint in self.endpoints.values_mut() {
            if let Some(script) = &mut endpoint.script {
                fix(script);
            }
        }
        for bench in self.benchmarks.values_mut() {
            fix(&mut bench.path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (self.quotas.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "quotas must sum to 1.0, got {}",
                self.quotas.sum()
            )));
        }
        if self.thresholds.shingle_size < 1 {
            return Err(Error::Config("shingle_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.thresholds.language) {
            return Err(Error::Config("language threshold must be in [0, 1]".into()));
        }
        if self.concurrency.requests == 0 {
            return Err(Error::Config("concurrency.requests must be positive".into()));
        }
        for (slot, endpoint) in &self.endpoints {
            endpoint
                .params()
                .validate()
                .map_err(|e| Error::Config(format!("endpoint {slot}: {e}")))?;
            if endpoint.kind == EndpointKind::Mock
                && endpoint.behavior.is_none()
                && endpoint.script.is_none()
            {
                return Err(Error::Config(format!(
                    "endpoint {slot}: mock needs behavior or script"
                )));
            }
        }
        Ok(())
    }

    pub fn endpoint(&self, slot: &str) -> Result<&EndpointConfig> {
        self.endpoints
            .get(slot)
            .ok_or_else(|| Error::Config(format!("endpoint slot `{slot}` is not configured")))
    }

    /// Build the client and parameters for a slot.
    pub fn client(&self, slot: &str) -> Result<(Box<dyn ChatClient>, InferenceParams)> {
        let cfg = self.endpoint(slot)?;
        Ok((cfg.client()?, cfg.params()))
    }

    pub fn work_path(&self, name: &str) -> PathBuf {
        self.paths.work_dir.join(name)
    }
}

/// Set a dotted path inside a TOML document; the value string is parsed as
/// TOML when possible and falls back to a plain string.
fn apply_override(root: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    // parse through a dummy assignment so bare scalars like `99` work
    let parsed: toml::Value = match format!("v = {raw}").parse::<toml::Value>() {
        Ok(toml::Value::Table(mut t)) => t.remove("v").unwrap_or(toml::Value::String(raw.into())),
        _ => toml::Value::String(raw.to_string()),
    };
    let mut cursor = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cursor
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("--set {key}: `{part}` is not a table")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        cursor = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(body: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        (dir, path)
    }

    const MINIMAL: &str = r#"
seed = 7

[paths]
corpus = "corpus.jsonl"
work_dir = "out"

[endpoints.dr]
kind = "mock"
behavior = "reformer"
"#;

    #[test]
    fn minimal_config_loads_with_defaults() {
        let (dir, path) = write_config(MINIMAL);
        let config = PipelineConfig::load(&path, &[]).unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.thresholds.language, 0.95);
        assert_eq!(config.thresholds.min_words, 50);
        assert_eq!(config.thresholds.min_sentences, 5);
        assert_eq!(config.thresholds.max_token_len, 1000);
        assert_eq!(config.thresholds.shingle_size, 3);
        assert_eq!(config.quotas.grounded, 0.5);
        // relative paths resolve against the config directory
        assert_eq!(config.paths.corpus, dir.path().join("corpus.jsonl"));
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let (_dir, path) = write_config(MINIMAL);
        let config = PipelineConfig::load(
            &path,
            &[
                ("seed".to_string(), "99".to_string()),
                ("thresholds.language".to_string(), "0.5".to_string()),
                ("endpoints.dr.mode".to_string(), "think".to_string()),
            ],
        )
        .unwrap();
        assert_eq!(config.seed, 99);
        assert_eq!(config.thresholds.language, 0.5);
        assert_eq!(config.endpoints["dr"].mode, Mode::Think);
    }

    #[test]
    fn invalid_mode_rejected_at_parse() {
        let body = MINIMAL.replace("behavior = \"reformer\"", "behavior = \"reformer\"\nmode = \"loud\"");
        let (_dir, path) = write_config(&body);
        assert!(PipelineConfig::load(&path, &[]).is_err());
    }

    #[test]
    fn quota_sum_validated() {
        let body = format!("{MINIMAL}\n[quotas]\ngrounded = 0.9\nintrinsic = 0.2\nextrinsic = 0.2\n");
        let (_dir, path) = write_config(&body);
        let err = PipelineConfig::load(&path, &[]).unwrap_err();
        assert!(err.to_string().contains("quotas"));
    }

    #[test]
    fn endpoint_params_inherit_mode_preset_with_overrides() {
        let body = format!("{MINIMAL}\n[endpoints.pg]\nkind = \"mock\"\nbehavior = \"echo\"\nmode = \"think\"\ntemperature = 0.33\n");
        let (_dir, path) = write_config(&body);
        let config = PipelineConfig::load(&path, &[]).unwrap();
        let params = config.endpoints["pg"].params();
        assert_eq!(params.temperature, 0.33);
        assert_eq!(params.top_p, 0.95, "think preset untouched");
        let params = config.endpoints["dr"].params();
        assert_eq!(params.temperature, 0.7, "no-think preset default");
    }

    #[test]
    fn unknown_endpoint_slot_is_an_error() {
        let (_dir, path) = write_config(MINIMAL);
        let config = PipelineConfig::load(&path, &[]).unwrap();
        assert!(config.client("cg").is_err());
        assert!(config.client("dr").is_ok());
    }
}
