//! Getting model responses: replaying stored response files, or querying a
//! chat-completion style endpoint.

mod batch;
mod client;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::QuestionRef;
use crate::metrics::ShotSetting;

pub use batch::{run_batch, BatchItem, BatchStats};
pub use client::{
    ApiStyle, Completer, Completion, EndpointConfig, EndpointError, HttpEndpoint, RetryPolicy,
    OFFLINE_ENV,
};

/// Sampling parameters sent with every request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_new_tokens: u32,
    pub top_p: f64,
    pub repetition_penalty: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            max_new_tokens: 256,
            top_p: 0.9,
            repetition_penalty: 1.05,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.max_new_tokens == 0 {
            return Err("max_new_tokens must be positive".into());
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if !(self.repetition_penalty >= 1.0 && self.repetition_penalty.is_finite()) {
            return Err(format!(
                "repetition_penalty must be >= 1, got {}",
                self.repetition_penalty
            ));
        }
        Ok(())
    }
}

/// `sha256:<hex>` over the exact prompt bytes.
pub fn prompt_hash(prompt: &str) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(prompt.as_bytes())))
}

/// One model response, bound to the prompt that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub question_ref: QuestionRef,
    pub shot_setting: ShotSetting,
    pub prompt_hash: String,
    pub response_text: String,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("{} prompt hash mismatch(es); first: {}", .0.len(), .0[0])]
    HashMismatch(Vec<String>),
}

/// Parses ResponseRecord JSON Lines, keeping file order. Blank lines are
/// skipped; line numbers in errors are one-based.
pub fn parse_records(text: &str) -> Result<Vec<ResponseRecord>, ReplayError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| ReplayError::Malformed {
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Reads a stored response file. Never touches the network.
pub fn replay(path: &Path) -> Result<Vec<ResponseRecord>, ReplayError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReplayError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_records(&text)
}

/// Compares stored prompt hashes with freshly rendered ones. Returns one
/// warning per mismatch; in strict mode any mismatch is an error. Records
/// without a rendered counterpart are not checked here.
pub fn check_prompt_hashes(
    records: &[ResponseRecord],
    expected: &HashMap<(QuestionRef, ShotSetting), String>,
    strict: bool,
) -> Result<Vec<String>, ReplayError> {
    let warnings: Vec<String> = records
        .iter()
        .filter_map(|r| {
            let want = expected.get(&(r.question_ref.clone(), r.shot_setting))?;
            (want != &r.prompt_hash).then(|| {
                format!(
                    "{} ({}): stored prompt hash {} differs from rendered {}",
                    r.question_ref, r.shot_setting, r.prompt_hash, want
                )
            })
        })
        .collect();
    if strict && !warnings.is_empty() {
        return Err(ReplayError::HashMismatch(warnings));
    }
    Ok(warnings)
}

pub fn write_records(records: &[ResponseRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("in-memory JSON write");
        out.push(b'\n');
    }
    out
}
