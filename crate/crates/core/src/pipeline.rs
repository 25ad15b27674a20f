//! End-to-end stages driven by the command-line tool: render prompts, obtain
//! responses, score them, and record every setting that produced the numbers
//! in a run manifest.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{parse_dataset, Dataset, QuestionRef};
use crate::error::{Error, Result};
use crate::gestalt::{Normalization, SimilarityMode, SimilarityVariant};
use crate::inference::{
    self, check_prompt_hashes, prompt_hash, run_batch, BatchItem, Completer, EndpointConfig,
    GenerationParams, HttpEndpoint, ResponseRecord,
};
use crate::metrics::{aggregate, eval_question, write_results, EvalResult, RunMetrics, ScoringOptions, ShotSetting};
use crate::prompt::{Exemplar, Language, PromptTemplate};
use crate::report::ReportInput;

fn shot_from_toml<'de, D: Deserializer<'de>>(d: D) -> Result<ShotSetting, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u8),
        Str(String),
    }
    match Raw::deserialize(d)? {
        Raw::Int(n) => n.to_string().parse(),
        Raw::Str(s) => s.parse(),
    }
    .map_err(serde::de::Error::custom)
}

fn default_shot() -> ShotSetting {
    ShotSetting::ZeroShot
}

/// Settings for one evaluation run, read from TOML and then overridden by
/// command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Column name in reports, e.g. "Llama2-70B 3k".
    #[serde(default = "default_name")]
    pub name: String,
    /// Overrides the dataset name (defaults to the file stem).
    #[serde(default)]
    pub dataset_name: Option<String>,
    #[serde(default = "default_shot", deserialize_with = "shot_from_toml")]
    pub shot: ShotSetting,
    #[serde(default)]
    pub language: Language,
    #[serde(default)]
    pub template_file: Option<PathBuf>,
    /// Held-out question used as the 1-shot example.
    #[serde(default)]
    pub exemplar_id: Option<String>,
    /// Dataset holding the exemplar; defaults to the evaluated dataset.
    #[serde(default)]
    pub exemplar_dataset: Option<PathBuf>,
    /// Ideal answer shown for the exemplar; defaults to its correct choice
    /// text.
    #[serde(default)]
    pub exemplar_answer: Option<String>,
    #[serde(default)]
    pub similarity: SimilarityVariant,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub accept_label_match: bool,
    #[serde(default)]
    pub include_image_questions: bool,
    #[serde(default)]
    pub strict_prompt_hash: bool,
    #[serde(default)]
    pub training_hours: Option<f64>,
    #[serde(default)]
    pub generation: GenerationParams,
    /// Fine-tuning hyperparameters, carried into the manifest untouched.
    #[serde(default)]
    pub finetune: BTreeMap<String, serde_json::Value>,
}

fn default_name() -> String {
    "model".into()
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn mode(&self) -> SimilarityMode {
        SimilarityMode::new(self.similarity, self.normalization)
    }

    pub fn scoring(&self) -> ScoringOptions {
        ScoringOptions {
            mode: self.mode(),
            accept_label_match: self.accept_label_match,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIdentity {
    pub name: String,
    pub digest: String,
    pub n_questions: usize,
    pub n_scored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringPolicy {
    pub accuracy: String,
    pub exact_match: String,
    pub gestalt: String,
    pub response_normalization: Vec<String>,
}

impl ScoringPolicy {
    pub fn describe(opts: &ScoringOptions) -> Self {
        let mut norm = vec!["trim".to_owned(), "strip_leading_response_marker".to_owned()];
        if opts.mode.normalization == Normalization::NfkcTrim {
            norm.push("nfkc".into());
        }
        Self {
            accuracy: "closest_choice_in_answer_set".into(),
            exact_match: if opts.accept_label_match {
                "all_answer_texts_or_all_labels_contained".into()
            } else {
                "all_answer_texts_contained".into()
            },
            gestalt: "max_over_answers(similarity(response, answer_text))".into(),
            response_normalization: norm,
        }
    }
}

/// Everything that determined a run's numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_name: String,
    pub dataset: DatasetIdentity,
    pub similarity_mode: SimilarityMode,
    pub scoring: ScoringPolicy,
    pub template_language: Language,
    pub template_digest: String,
    pub shot_setting: ShotSetting,
    pub exemplar_id: Option<String>,
    pub generation_params: GenerationParams,
    pub endpoint: Option<String>,
    pub response_source: String,
    pub include_image_questions: bool,
    pub finetune: BTreeMap<String, serde_json::Value>,
    pub created_at: String,
}

impl RunManifest {
    /// Digest of the manifest with the timestamp blanked, so identical
    /// settings give identical digests.
    pub fn digest(&self) -> String {
        let mut m = self.clone();
        m.created_at.clear();
        hex::encode(Sha256::digest(serde_json::to_vec(&m).expect("in-memory JSON write")))
    }
}

/// The `summary.json` written by an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_name: String,
    pub metrics: RunMetrics,
    pub training_hours: Option<f64>,
    pub manifest_digest: String,
    pub manifest: RunManifest,
}

impl RunSummary {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::Validation(format!("{}: not a run summary: {e}", path.display())))
    }

    pub fn to_report_input(&self) -> ReportInput {
        ReportInput {
            config_name: self.config_name.clone(),
            dataset_name: self.manifest.dataset.name.clone(),
            dataset_digest: self.manifest.dataset.digest.clone(),
            mode: self.manifest.similarity_mode,
            template_language: Some(self.manifest.template_language),
            generation_params: Some(self.manifest.generation_params),
            training_hours: self.training_hours,
            manifest_digest: self.manifest_digest.clone(),
            metrics: self.metrics.clone(),
        }
    }
}

pub fn load_dataset(path: &Path, name: Option<&str>) -> Result<Dataset> {
    let raw = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let name = name.map(str::to_owned).unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    parse_dataset(&raw, &name).map_err(|source| Error::Dataset {
        path: path.to_owned(),
        source,
    })
}

/// The template and scoring plan for a dataset under a config.
pub struct Plan {
    pub dataset: Dataset,
    pub template: PromptTemplate,
    pub template_text: String,
    /// Positions of the questions that are rendered and scored.
    pub scored: Vec<usize>,
}

impl Plan {
    pub fn new(dataset: Dataset, config: &RunConfig) -> Result<Self> {
        config
            .generation
            .validate()
            .map_err(Error::Config)?;
        let mut template = match &config.template_file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
                PromptTemplate::parse(&text, config.language)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => PromptTemplate::builtin(config.language),
        };

        let mut held_out = None;
        if config.shot == ShotSetting::OneShot {
            let id = config.exemplar_id.as_deref().ok_or_else(|| {
                Error::Config("1-shot evaluation needs exemplar_id".into())
            })?;
            let question = match &config.exemplar_dataset {
                Some(path) => load_dataset(path, None)?
                    .find_id(id)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("exemplar {id} not found in {}", path.display())))?,
                None => {
                    held_out = Some(id.to_owned());
                    dataset
                        .find_id(id)
                        .cloned()
                        .ok_or_else(|| Error::Config(format!("exemplar {id} not found in dataset")))?
                }
            };
            let mut exemplar = Exemplar::from_question(question);
            if let Some(answer) = &config.exemplar_answer {
                exemplar.answer_text = answer.clone();
            }
            template = template.with_exemplar(exemplar);
        }

        let scored = dataset
            .questions
            .iter()
            .enumerate()
            .filter(|(_, q)| config.include_image_questions || q.text_only)
            .filter(|(_, q)| held_out.is_none() || q.problem_id != held_out)
            .map(|(i, _)| i)
            .collect();
        let template_text = template.to_template_text();
        Ok(Self {
            dataset,
            template,
            template_text,
            scored,
        })
    }

    pub fn prompts(&self, shot: ShotSetting) -> Result<Vec<BatchItem>> {
        self.scored
            .iter()
            .map(|&i| {
                let prompt = self
                    .template
                    .render(&self.dataset.questions[i], shot)
                    .map_err(|e| Error::Config(e.to_string()))?;
                Ok(BatchItem {
                    question_ref: self.dataset.question_ref(i),
                    prompt,
                })
            })
            .collect()
    }
}

/// Where responses come from.
pub enum ResponseSource<'a> {
    /// A stored ResponseRecord file. No network access.
    Replay(PathBuf),
    /// Any completer, e.g. an [`HttpEndpoint`] or a test double.
    Live {
        completer: &'a dyn Completer,
        max_concurrency: usize,
        endpoint_identity: Option<String>,
    },
}

#[derive(Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub results: Vec<EvalResult>,
    pub warnings: Vec<String>,
}

/// Orders records by dataset position and checks that every scored question
/// has exactly one response for the shot setting.
fn match_responses(
    plan: &Plan,
    records: Vec<ResponseRecord>,
    shot: ShotSetting,
) -> Result<Vec<ResponseRecord>> {
    let scored: HashSet<usize> = plan.scored.iter().copied().collect();
    let mut by_pos: HashMap<usize, ResponseRecord> = HashMap::new();
    let mut extra = Vec::new();
    let mut duplicate = Vec::new();
    for r in records.into_iter().filter(|r| r.shot_setting == shot) {
        match plan.dataset.position(&r.question_ref) {
            Some(pos) if scored.contains(&pos) => {
                let key = r.question_ref.to_string();
                if by_pos.insert(pos, r).is_some() {
                    duplicate.push(key);
                }
            }
            _ => extra.push(r.question_ref.to_string()),
        }
    }
    let missing: Vec<String> = plan
        .scored
        .iter()
        .filter(|p| !by_pos.contains_key(p))
        .map(|&p| plan.dataset.question_ref(p).to_string())
        .collect();
    if !(missing.is_empty() && extra.is_empty() && duplicate.is_empty()) {
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!("missing responses for [{}]", missing.join(", ")));
        }
        if !extra.is_empty() {
            parts.push(format!("responses for unscored or unknown questions [{}]", extra.join(", ")));
        }
        if !duplicate.is_empty() {
            parts.push(format!("duplicate responses for [{}]", duplicate.join(", ")));
        }
        return Err(Error::Validation(parts.join("; ")));
    }
    Ok(plan
        .scored
        .iter()
        .map(|p| by_pos.remove(p).expect("coverage checked"))
        .collect())
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Writes `bytes` to a new file, refusing to replace an existing one.
pub fn write_new(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(|e| Error::io(format!("cannot create {}", path.display()), e))?;
    f.write_all(bytes)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

fn pretty(v: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("in-memory JSON write");
    out.push(b'\n');
    out
}

/// Scores a dataset against a response source and writes `results.jsonl`,
/// `summary.json` and `manifest.json` into `out_dir` (plus
/// `responses.jsonl` for live runs). Existing files are never overwritten.
pub fn evaluate_run(
    dataset_path: &Path,
    source: ResponseSource<'_>,
    config: &RunConfig,
    out_dir: &Path,
    timestamp: &str,
) -> Result<RunOutcome> {
    let dataset = load_dataset(dataset_path, config.dataset_name.as_deref())?;
    let plan = Plan::new(dataset, config)?;
    if plan.scored.is_empty() {
        return Err(Error::Validation("no questions to score".into()));
    }
    let items = plan.prompts(config.shot)?;

    let (records, response_source, endpoint, live_records) = match source {
        ResponseSource::Replay(path) => {
            let records = inference::replay(&path)?;
            let src = format!("replay:sha256:{}", file_digest(&path)?);
            (records, src, None, None)
        }
        ResponseSource::Live {
            completer,
            max_concurrency,
            endpoint_identity,
        } => {
            let (records, stats) = run_batch(&items, completer, &config.generation, config.shot, max_concurrency)
                .map_err(|(q, source)| Error::Endpoint {
                    question: q.to_string(),
                    source,
                })?;
            log::info!(
                "{} responses, {} requests, peak concurrency {}",
                stats.completed,
                stats.attempts,
                stats.max_in_flight
            );
            let bytes = inference::write_records(&records);
            (records, "endpoint".to_owned(), endpoint_identity, Some(bytes))
        }
    };

    let records = match_responses(&plan, records, config.shot)?;
    let expected: HashMap<(QuestionRef, ShotSetting), String> = items
        .iter()
        .map(|it| ((it.question_ref.clone(), config.shot), prompt_hash(&it.prompt)))
        .collect();
    let warnings = check_prompt_hashes(&records, &expected, config.strict_prompt_hash)?;
    for w in &warnings {
        warn!("{w}");
    }

    let opts = config.scoring();
    let results: Vec<EvalResult> = plan
        .scored
        .iter()
        .zip(&records)
        .map(|(&pos, r)| {
            eval_question(
                &plan.dataset.questions[pos],
                plan.dataset.question_ref(pos),
                &r.response_text,
                opts,
            )
        })
        .collect();
    let metrics = aggregate(&results, config.shot).expect("scored set is non-empty");

    let manifest = RunManifest {
        tool_version: crate::VERSION.to_owned(),
        config_name: config.name.clone(),
        dataset: DatasetIdentity {
            name: plan.dataset.name.clone(),
            digest: plan.dataset.digest(),
            n_questions: plan.dataset.len(),
            n_scored: plan.scored.len(),
        },
        similarity_mode: opts.mode,
        scoring: ScoringPolicy::describe(&opts),
        template_language: config.language,
        template_digest: hex::encode(Sha256::digest(plan.template_text.as_bytes())),
        shot_setting: config.shot,
        exemplar_id: plan
            .template
            .exemplar
            .as_ref()
            .and_then(|e| e.question.problem_id.clone()),
        generation_params: config.generation,
        endpoint,
        response_source,
        include_image_questions: config.include_image_questions,
        finetune: config.finetune.clone(),
        created_at: timestamp.to_owned(),
    };
    let summary = RunSummary {
        config_name: config.name.clone(),
        metrics,
        training_hours: config.training_hours,
        manifest_digest: manifest.digest(),
        manifest: manifest.clone(),
    };

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    write_new(&out_dir.join("manifest.json"), &pretty(&manifest))?;
    if let Some(bytes) = live_records {
        write_new(&out_dir.join("responses.jsonl"), &bytes)?;
    }
    write_new(&out_dir.join("results.jsonl"), &write_results(&results))?;
    write_new(&out_dir.join("summary.json"), &pretty(&summary))?;

    Ok(RunOutcome {
        summary,
        results,
        warnings,
    })
}

/// Renders prompts for the scored questions and collects responses from an
/// endpoint, in dataset order.
pub fn infer(
    dataset_path: &Path,
    config: &RunConfig,
    completer: &dyn Completer,
    max_concurrency: usize,
) -> Result<Vec<ResponseRecord>> {
    let dataset = load_dataset(dataset_path, config.dataset_name.as_deref())?;
    let plan = Plan::new(dataset, config)?;
    let items = plan.prompts(config.shot)?;
    let (records, _) = run_batch(&items, completer, &config.generation, config.shot, max_concurrency)
        .map_err(|(q, source)| Error::Endpoint {
            question: q.to_string(),
            source,
        })?;
    Ok(records)
}

/// Checks a stored response file against freshly rendered prompts and
/// returns its records re-sorted into dataset order.
pub fn verify_replay(
    dataset_path: &Path,
    config: &RunConfig,
    replay_path: &Path,
) -> Result<(Vec<ResponseRecord>, Vec<String>)> {
    let dataset = load_dataset(dataset_path, config.dataset_name.as_deref())?;
    let plan = Plan::new(dataset, config)?;
    let items = plan.prompts(config.shot)?;
    let records = match_responses(&plan, inference::replay(replay_path)?, config.shot)?;
    let expected: HashMap<(QuestionRef, ShotSetting), String> = items
        .iter()
        .map(|it| ((it.question_ref.clone(), config.shot), prompt_hash(&it.prompt)))
        .collect();
    let warnings = check_prompt_hashes(&records, &expected, config.strict_prompt_hash)?;
    Ok((records, warnings))
}

/// Opens an HTTP endpoint, mapping construction failures to run errors.
pub fn open_endpoint(cfg: &EndpointConfig) -> Result<HttpEndpoint> {
    HttpEndpoint::new(cfg.clone()).map_err(|source| Error::Endpoint {
        question: "-".into(),
        source,
    })
}
