use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use medqa_eval::error::{exit, Error, Result};
use medqa_eval::gestalt::{similarity, Normalization, SimilarityMode, SimilarityVariant};
use medqa_eval::inference::{self, EndpointConfig, Completer};
use medqa_eval::instructgen::{self, Article, DEFAULT_CHUNK_UNITS};
use medqa_eval::metrics::ShotSetting;
use medqa_eval::pipeline::{self, Plan, ResponseSource, RunConfig, RunSummary};
use medqa_eval::prompt::Language;
use medqa_eval::report::{build_report, ReportFormat};
use medqa_eval::{corpus, VERSION};

/// Score free-text model answers to multiple-choice medical QA datasets and
/// generate instruction-tuning data.
#[derive(Parser)]
#[command(name = "medqa-eval", disable_version_flag = true)]
struct Cli {
    /// Print name and version as JSON and exit.
    #[arg(long)]
    version: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a dataset file parses; lists every invalid record.
    Validate {
        path: PathBuf,
    },
    /// Print the similarity of two strings with 6 decimals.
    Similarity {
        a: String,
        b: String,
        /// gestalt or lcs
        #[arg(long, default_value = "gestalt")]
        mode: SimilarityVariant,
        /// Apply NFKC before trimming.
        #[arg(long)]
        nfkc: bool,
    },
    /// Render evaluation prompts as JSON Lines (problem_id, prompt).
    RenderPrompts {
        dataset: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collect responses from an endpoint, or check a stored response file.
    Infer {
        dataset: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        source: SourceArgs,
        /// Where to write the ResponseRecord JSON Lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score responses and write results.jsonl, summary.json, manifest.json.
    Evaluate {
        dataset: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        source: SourceArgs,
        /// Output directory; must not already contain run files.
        #[arg(long)]
        out_dir: PathBuf,
        /// Timestamp recorded in the manifest (RFC 3339); defaults to now.
        #[arg(long)]
        timestamp: Option<String>,
    },
    /// Generate instruction/output pairs from article text files.
    GenerateInstructions {
        #[arg(required = true)]
        articles: Vec<PathBuf>,
        #[arg(long)]
        endpoint: PathBuf,
        /// Maximum chunk length in characters.
        #[arg(long, default_value_t = DEFAULT_CHUNK_UNITS)]
        chunk: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Run config supplying generation parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Generation template file; must contain {input_text} once.
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        timestamp: Option<String>,
    },
    /// Build a comparison table from run summary files.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// md, csv or json
        #[arg(long, default_value = "md")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        timestamp: Option<String>,
    },
}

/// Run settings: a TOML config plus flag overrides.
#[derive(Args)]
struct RunArgs {
    /// Run config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Column name used in reports.
    #[arg(long)]
    name: Option<String>,
    /// 0 or 1.
    #[arg(long)]
    shot: Option<ShotSetting>,
    /// ja or en.
    #[arg(long)]
    lang: Option<Language>,
    /// Plain-text template with {instruction}, {input}, {response}.
    #[arg(long)]
    template: Option<PathBuf>,
    /// problem_id of the held-out 1-shot exemplar.
    #[arg(long)]
    exemplar_id: Option<String>,
    /// Dataset file holding the exemplar.
    #[arg(long)]
    exemplar_dataset: Option<PathBuf>,
    /// gestalt or lcs.
    #[arg(long)]
    mode: Option<SimilarityVariant>,
    /// NFKC-normalise texts before scoring.
    #[arg(long)]
    nfkc: bool,
    /// Count responses naming every correct label as exact matches.
    #[arg(long)]
    accept_label_match: bool,
    /// Score questions marked text_only = false as well.
    #[arg(long)]
    include_image_questions: bool,
    /// Fail instead of warning when stored prompt hashes differ.
    #[arg(long)]
    strict_hash: bool,
    /// Training hours shown in reports.
    #[arg(long)]
    training_hours: Option<f64>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.name {
            c.name = v.clone();
        }
        if let Some(v) = self.shot {
            c.shot = v;
        }
        if let Some(v) = self.lang {
            c.language = v;
        }
        if let Some(v) = &self.template {
            c.template_file = Some(v.clone());
        }
        if let Some(v) = &self.exemplar_id {
            c.exemplar_id = Some(v.clone());
        }
        if let Some(v) = &self.exemplar_dataset {
            c.exemplar_dataset = Some(v.clone());
        }
        if let Some(v) = self.mode {
            c.similarity = v;
        }
        if self.nfkc {
            c.normalization = Normalization::NfkcTrim;
        }
        c.accept_label_match |= self.accept_label_match;
        c.include_image_questions |= self.include_image_questions;
        c.strict_prompt_hash |= self.strict_hash;
        if self.training_hours.is_some() {
            c.training_hours = self.training_hours;
        }
        Ok(c)
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct SourceArgs {
    /// Endpoint config (TOML); credentials come from its auth_env variable.
    #[arg(long)]
    endpoint: Option<PathBuf>,
    /// Stored ResponseRecord JSON Lines; no network access.
    #[arg(long)]
    replay: Option<PathBuf>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => pipeline::write_file(path, bytes),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io("stdout", e)),
    }
}

fn load_endpoint(path: &Path) -> Result<EndpointConfig> {
    EndpointConfig::load(path).map_err(Error::Config)
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Validate { path } => {
            let raw = std::fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            match corpus::parse_dataset(&raw, &name) {
                Ok(d) => {
                    let text_only = d.questions.iter().filter(|q| q.text_only).count();
                    println!("ok: {} questions ({text_only} text-only)", d.len());
                    Ok(exit::OK)
                }
                Err(corpus::CorpusError::Records(errs)) => {
                    for e in &errs {
                        println!("{}: {e}", path.display());
                    }
                    eprintln!("{} invalid record(s)", errs.len());
                    Ok(exit::VALIDATION)
                }
                Err(e) => {
                    println!("{}: {e}", path.display());
                    Ok(exit::VALIDATION)
                }
            }
        }
        Command::Similarity { a, b, mode, nfkc } => {
            let norm = if nfkc { Normalization::NfkcTrim } else { Normalization::TrimOnly };
            println!("{:.6}", similarity(&a, &b, SimilarityMode::new(mode, norm)));
            Ok(exit::OK)
        }
        Command::RenderPrompts { dataset, run, out } => {
            let config = run.resolve()?;
            let d = pipeline::load_dataset(&dataset, config.dataset_name.as_deref())?;
            let plan = Plan::new(d, &config)?;
            let mut buf = Vec::new();
            for item in plan.prompts(config.shot)? {
                let problem_id = match &item.question_ref {
                    corpus::QuestionRef::Id(id) => Some(id.as_str()),
                    corpus::QuestionRef::Index(_) => None,
                };
                serde_json::to_writer(
                    &mut buf,
                    &serde_json::json!({
                        "problem_id": problem_id,
                        "question_ref": item.question_ref,
                        "prompt_hash": inference::prompt_hash(&item.prompt),
                        "prompt": item.prompt,
                    }),
                )
                .expect("in-memory JSON write");
                buf.push(b'\n');
            }
            emit(out.as_deref(), &buf)?;
            Ok(exit::OK)
        }
        Command::Infer { dataset, run, source, out } => {
            let config = run.resolve()?;
            let (records, warnings) = match (&source.endpoint, &source.replay) {
                (_, Some(replay)) => pipeline::verify_replay(&dataset, &config, replay)?,
                (Some(endpoint), None) => {
                    let cfg = load_endpoint(endpoint)?;
                    let client = pipeline::open_endpoint(&cfg)?;
                    let records = pipeline::infer(&dataset, &config, &client, cfg.max_concurrency)?;
                    (records, Vec::new())
                }
                (None, None) => unreachable!("clap requires a source"),
            };
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            emit(out.as_deref(), &inference::write_records(&records))?;
            Ok(exit::OK)
        }
        Command::Evaluate { dataset, run, source, out_dir, timestamp } => {
            let config = run.resolve()?;
            let timestamp = timestamp.unwrap_or_else(now);
            let outcome = match (&source.endpoint, &source.replay) {
                (_, Some(replay)) => pipeline::evaluate_run(
                    &dataset,
                    ResponseSource::Replay(replay.clone()),
                    &config,
                    &out_dir,
                    &timestamp,
                )?,
                (Some(endpoint), None) => {
                    let cfg = load_endpoint(endpoint)?;
                    let client = pipeline::open_endpoint(&cfg)?;
                    pipeline::evaluate_run(
                        &dataset,
                        ResponseSource::Live {
                            completer: &client as &dyn Completer,
                            max_concurrency: cfg.max_concurrency,
                            endpoint_identity: Some(cfg.redacted_identity()),
                        },
                        &config,
                        &out_dir,
                        &timestamp,
                    )?
                }
                (None, None) => unreachable!("clap requires a source"),
            };
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            let m = &outcome.summary.metrics;
            println!(
                "{} ({}): n={} accuracy={:.3} exact_match={:.3} gestalt={:.3}",
                outcome.summary.config_name,
                m.shot_setting,
                m.n_questions,
                m.accuracy,
                m.exact_match,
                m.gestalt_score
            );
            Ok(exit::OK)
        }
        Command::GenerateInstructions { articles, endpoint, chunk, out, report, config, template, timestamp } => {
            if chunk == 0 {
                return Err(Error::Config("--chunk must be positive".into()));
            }
            let params = match &config {
                Some(path) => RunConfig::load(path)?.generation,
                None => Default::default(),
            };
            params.validate().map_err(Error::Config)?;
            let template = match &template {
                Some(path) => std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?,
                None => instructgen::GENERATION_TEMPLATE.to_owned(),
            };
            instructgen::check_generation_template(&template).map_err(|e| Error::Config(e.to_string()))?;
            let mut docs = Vec::new();
            for path in &articles {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
                let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                docs.push(Article { id, text });
            }
            let cfg = load_endpoint(&endpoint)?;
            let client = pipeline::open_endpoint(&cfg)?;
            let (pairs, mut rep) = instructgen::generate(&docs, &template, chunk, &client, &params, cfg.max_concurrency)
                .map_err(|e| match e {
                    instructgen::PipelineError::Prompt(p) => Error::Config(p.to_string()),
                    instructgen::PipelineError::Endpoint { source_ref, source } => Error::Endpoint {
                        question: source_ref,
                        source,
                    },
                })?;
            rep.endpoint = Some(cfg.redacted_identity());
            rep.created_at = timestamp.unwrap_or_else(now);
            pipeline::write_file(&out, &instructgen::write_pairs(&pairs))?;
            let mut rep_bytes = serde_json::to_vec_pretty(&rep).expect("in-memory JSON write");
            rep_bytes.push(b'\n');
            pipeline::write_file(&report, &rep_bytes)?;
            println!(
                "{} pairs from {} chunk(s); {} rejected, {} duplicates",
                rep.totals.emitted,
                rep.chunks.len(),
                rep.totals.rejected,
                rep.totals.deduped
            );
            Ok(exit::OK)
        }
        Command::Report { runs, format, out, timestamp } => {
            let inputs = runs
                .iter()
                .map(|p| RunSummary::load(p).map(|s| s.to_report_input()))
                .collect::<Result<Vec<_>>>()?;
            let report = build_report(&inputs, &timestamp.unwrap_or_else(now))
                .map_err(|e| Error::Validation(e.to_string()))?;
            emit(out.as_deref(), &report.emit(format))?;
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.version {
        println!("{}", serde_json::json!({ "name": "medqa-eval", "version": VERSION }));
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("no subcommand given; see --help");
        return ExitCode::from(exit::USAGE as u8);
    };
    match run(command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
