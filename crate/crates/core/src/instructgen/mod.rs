//! Instruction-data generation: split source articles into chunks, ask a
//! chat model for question/answer pairs about each chunk, and recover the
//! pairs from its loosely formatted reply.

mod chunk;
mod quasi_json;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::QuestionRef;
use crate::inference::{run_batch, BatchItem, Completer, EndpointError, GenerationParams};
use crate::metrics::ShotSetting;

pub use chunk::chunk_article;
pub use quasi_json::{parse_object, ParseFailure};

/// Default generation request. `{input_text}` is replaced by the chunk.
/// Replace it with `--template` to use a different wording.
pub const GENERATION_TEMPLATE: &str = "### Instructions:\n\
Treat the input below as background knowledge and write question and answer \
pairs about it. Write each pair as \
{'instruction': the question, 'output': the answer} on a single line with no \
line breaks inside it. Write 15 pairs, one per line.\n\
### Input:\n\
{input_text}";

pub const INPUT_PLACEHOLDER: &str = "{input_text}";

/// Pairs requested per call. Replies are not validated against it.
pub const PAIRS_PER_CALL: usize = 15;

pub const DEFAULT_CHUNK_UNITS: usize = 1500;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenerationError {
    #[error("input chunk is empty")]
    EmptyChunk,
    #[error("input chunk has {len} characters, limit is {limit}")]
    ChunkTooLong { len: usize, limit: usize },
    #[error("generation template must contain {{input_text}} exactly once")]
    BadTemplate,
}

pub fn check_generation_template(template: &str) -> Result<(), GenerationError> {
    if template.matches(INPUT_PLACEHOLDER).count() == 1 {
        Ok(())
    } else {
        Err(GenerationError::BadTemplate)
    }
}

/// Fills the default generation template with one article chunk.
pub fn build_generation_prompt(input_text: &str, max_units: usize) -> Result<String, GenerationError> {
    fill_generation_template(GENERATION_TEMPLATE, input_text, max_units)
}

pub fn fill_generation_template(
    template: &str,
    input_text: &str,
    max_units: usize,
) -> Result<String, GenerationError> {
    check_generation_template(template)?;
    if input_text.trim().is_empty() {
        return Err(GenerationError::EmptyChunk);
    }
    let len = input_text.chars().count();
    if len > max_units {
        return Err(GenerationError::ChunkTooLong {
            len,
            limit: max_units,
        });
    }
    Ok(template.replacen(INPUT_PLACEHOLDER, input_text, 1))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InstructionPair {
    pub instruction: String,
    pub output: String,
    pub source_ref: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// One-based line within the model reply.
    pub line: usize,
    pub reason: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairCounts {
    /// Lines that look like a record (contain `{`).
    pub lines_seen: usize,
    pub emitted: usize,
    pub rejected: usize,
    pub deduped: usize,
    /// Non-blank lines with no record in them, such as chatter before the
    /// list.
    pub skipped: usize,
}

impl PairCounts {
    pub fn add(&mut self, other: &PairCounts) {
        self.lines_seen += other.lines_seen;
        self.emitted += other.emitted;
        self.rejected += other.rejected;
        self.deduped += other.deduped;
        self.skipped += other.skipped;
    }

    pub fn conserved(&self) -> bool {
        self.emitted + self.rejected + self.deduped == self.lines_seen
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedPairs {
    pub pairs: Vec<InstructionPair>,
    pub rejections: Vec<Rejection>,
    pub counts: PairCounts,
}

/// Stateful deduplicating parser; feed model replies in generation order.
/// The first occurrence of an (instruction, output) pair wins, across all
/// replies fed to the same instance.
#[derive(Debug, Default)]
pub struct PairCollector {
    seen: HashSet<(String, String)>,
}

impl PairCollector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(&mut self, llm_output: &str, source_ref: &str) -> ParsedPairs {
        let mut out = ParsedPairs::default();
        for (n, raw) in llm_output.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let Some(start) = line.find('{') else {
                out.counts.skipped += 1;
                continue;
            };
            out.counts.lines_seen += 1;
            let reject = |reason: String| Rejection {
                line: n + 1,
                reason,
                text: raw.to_owned(),
            };
            match pair_from_line(&line[start..]) {
                Ok((instruction, output)) => {
                    if self.seen.insert((instruction.clone(), output.clone())) {
                        out.counts.emitted += 1;
                        out.pairs.push(InstructionPair {
                            instruction,
                            output,
                            source_ref: source_ref.to_owned(),
                        });
                    } else {
                        out.counts.deduped += 1;
                    }
                }
                Err(reason) => {
                    out.counts.rejected += 1;
                    out.rejections.push(reject(reason));
                }
            }
        }
        out
    }
}

/// Parses one reply on its own (dedup within the reply only).
pub fn parse_pairs(llm_output: &str, source_ref: &str) -> ParsedPairs {
    PairCollector::new().parse(llm_output, source_ref)
}

fn pair_from_line(text: &str) -> Result<(String, String), String> {
    let fields = match serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(
        text.trim_end_matches([',', ';']).trim_end(),
    ) {
        Ok(map) => map
            .into_iter()
            .filter_map(|(k, v)| match v {
                serde_json::Value::String(s) => Some((k, s)),
                _ => None,
            })
            .collect(),
        Err(_) => parse_object(text).map_err(|e| e.to_string())?,
    };
    let get = |name: &str| -> Result<String, String> {
        let mut found = fields.iter().filter(|(k, _)| k.trim() == name);
        let (_, value) = found.next().ok_or_else(|| format!("missing field {name}"))?;
        if found.next().is_some() {
            return Err(format!("duplicate field {name}"));
        }
        let value = value.trim();
        if value.is_empty() {
            return Err(format!("empty field {name}"));
        }
        Ok(value.to_owned())
    };
    Ok((get("instruction")?, get("output")?))
}

/// JSON Lines of `{"instruction": ..., "output": ...}`.
pub fn write_pairs(pairs: &[InstructionPair]) -> Vec<u8> {
    #[derive(Serialize)]
    struct Row<'a> {
        instruction: &'a str,
        output: &'a str,
    }
    let mut out = Vec::new();
    for p in pairs {
        serde_json::to_writer(
            &mut out,
            &Row {
                instruction: &p.instruction,
                output: &p.output,
            },
        )
        .expect("in-memory JSON write");
        out.push(b'\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkReport {
    pub source_ref: String,
    pub chars: usize,
    pub counts: PairCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedLine {
    pub source_ref: String,
    #[serde(flatten)]
    pub rejection: Rejection,
}

/// Sidecar manifest written next to a generated pair file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub tool_version: String,
    pub source_ids: Vec<String>,
    pub chunk_units: usize,
    /// SHA-256 of the generation template text.
    pub template_digest: String,
    pub pairs_requested_per_call: usize,
    pub generation_params: GenerationParams,
    pub model: String,
    pub endpoint: Option<String>,
    pub requests: u32,
    pub chunks: Vec<ChunkReport>,
    pub totals: PairCounts,
    pub rejections: Vec<RejectedLine>,
    pub created_at: String,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Prompt(#[from] GenerationError),
    #[error("chunk {source_ref}: {source}")]
    Endpoint {
        source_ref: String,
        #[source]
        source: EndpointError,
    },
}

/// A source article for generation.
#[derive(Debug, Clone)]
pub struct Article {
    pub id: String,
    pub text: String,
}

/// Chunks every article, sends one generation request per chunk (fanned out
/// up to `max_concurrency`), and parses the replies in chunk order.
pub fn generate(
    articles: &[Article],
    template: &str,
    chunk_units: usize,
    completer: &dyn Completer,
    params: &GenerationParams,
    max_concurrency: usize,
) -> Result<(Vec<InstructionPair>, GenerationReport), PipelineError> {
    check_generation_template(template)?;
    let mut refs = Vec::new();
    let mut items = Vec::new();
    for article in articles {
        for (k, chunk) in chunk_article(&article.text, chunk_units).into_iter().enumerate() {
            if chunk.trim().is_empty() {
                continue;
            }
            let prompt = fill_generation_template(template, &chunk, chunk_units)?;
            let source_ref = format!("{}#{k}", article.id);
            items.push(BatchItem {
                question_ref: QuestionRef::Index(refs.len()),
                prompt,
            });
            refs.push((source_ref, chunk.chars().count()));
        }
    }

    let (records, stats) = run_batch(&items, completer, params, ShotSetting::ZeroShot, max_concurrency)
        .map_err(|(r, source)| {
            let QuestionRef::Index(i) = r else { unreachable!("batch refs are indices") };
            PipelineError::Endpoint {
                source_ref: refs[i].0.clone(),
                source,
            }
        })?;

    let mut collector = PairCollector::new();
    let mut pairs = Vec::new();
    let mut chunks = Vec::new();
    let mut totals = PairCounts::default();
    let mut rejections = Vec::new();
    for ((source_ref, chars), record) in refs.iter().zip(&records) {
        let parsed = collector.parse(&record.response_text, source_ref);
        totals.add(&parsed.counts);
        chunks.push(ChunkReport {
            source_ref: source_ref.clone(),
            chars: *chars,
            counts: parsed.counts,
        });
        rejections.extend(parsed.rejections.into_iter().map(|rejection| RejectedLine {
            source_ref: source_ref.clone(),
            rejection,
        }));
        pairs.extend(parsed.pairs);
    }

    let report = GenerationReport {
        tool_version: crate::VERSION.to_owned(),
        source_ids: articles.iter().map(|a| a.id.clone()).collect(),
        chunk_units,
        template_digest: hex::encode(Sha256::digest(template.as_bytes())),
        pairs_requested_per_call: PAIRS_PER_CALL,
        generation_params: *params,
        model: completer.model_name().to_owned(),
        endpoint: None,
        requests: stats.attempts,
        chunks,
        totals,
        rejections,
        created_at: String::new(),
    };
    Ok((pairs, report))
}
