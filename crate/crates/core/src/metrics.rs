//! Per-question scoring and per-run aggregation of the three metrics:
//! closest-choice accuracy, exact match and Gestalt score.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ChoiceLabel, Question, QuestionRef};
use crate::gestalt::{closest_choice, similarity, SimilarityMode};

/// Template marker some instruction-tuned models echo back before answering.
pub const RESPONSE_ECHO: &str = "### Response:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotSetting {
    ZeroShot,
    OneShot,
}

impl ShotSetting {
    /// Column suffix used in reports: "0s" or "1s".
    pub fn short(self) -> &'static str {
        match self {
            ShotSetting::ZeroShot => "0s",
            ShotSetting::OneShot => "1s",
        }
    }
}

impl fmt::Display for ShotSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for ShotSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "0" | "0s" | "zero_shot" => Ok(ShotSetting::ZeroShot),
            "1" | "1s" | "one_shot" => Ok(ShotSetting::OneShot),
            other => Err(format!("unknown shot setting {other:?} (0|1)")),
        }
    }
}

/// Scoring options that are not part of the similarity kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScoringOptions {
    pub mode: SimilarityMode,
    /// Also count a response as an exact match when it names every correct
    /// label as a standalone letter. Off by default; for ablations only.
    #[serde(default)]
    pub accept_label_match: bool,
}

impl From<SimilarityMode> for ScoringOptions {
    fn from(mode: SimilarityMode) -> Self {
        Self {
            mode,
            accept_label_match: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub question_ref: QuestionRef,
    pub response: String,
    pub mapped_choice: ChoiceLabel,
    pub accuracy_hit: bool,
    pub exact_match_hit: bool,
    pub gestalt_value: f64,
}

/// Trims the response and drops a leading `### Response:` echo.
pub fn normalize_response(text: &str) -> &str {
    let t = text.trim();
    match t.strip_prefix(RESPONSE_ECHO) {
        Some(rest) => rest.trim(),
        None => t,
    }
}

/// Scores one response.
///
/// Accuracy maps the response to its closest choice and checks membership in
/// the answer set. Exact match requires every correct choice text to appear
/// in the response. The Gestalt value is the best similarity against any
/// correct choice, always computed as `similarity(response, choice_text)`.
pub fn eval_question(
    q: &Question,
    question_ref: QuestionRef,
    response: &str,
    opts: ScoringOptions,
) -> EvalResult {
    let cleaned = normalize_response(response);
    let mapped_choice = closest_choice(cleaned, q, opts.mode);
    let accuracy_hit = q.answer.contains(&mapped_choice);

    let folded = opts.mode.normalization.apply(cleaned);
    let text_hit = !folded.is_empty()
        && q.answer_texts()
            .all(|(_, t)| folded.contains(opts.mode.normalization.apply(t).as_str()));
    let label_hit = opts.accept_label_match
        && !folded.is_empty()
        && q.answer.iter().all(|l| mentions_label(&folded, *l));

    let gestalt_value = q
        .answer_texts()
        .map(|(_, t)| similarity(cleaned, t, opts.mode))
        .fold(0.0, f64::max);

    EvalResult {
        question_ref,
        response: response.to_owned(),
        mapped_choice,
        accuracy_hit,
        exact_match_hit: text_hit || label_hit,
        gestalt_value,
    }
}

fn mentions_label(text: &str, label: ChoiceLabel) -> bool {
    let chars: Vec<char> = text.chars().collect();
    let target = label.as_char();
    chars.iter().enumerate().any(|(i, &c)| {
        c.eq_ignore_ascii_case(&target)
            && (i == 0 || !chars[i - 1].is_alphanumeric())
            && chars.get(i + 1).is_none_or(|n| !n.is_alphanumeric())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub n_questions: usize,
    pub accuracy: f64,
    pub exact_match: f64,
    pub gestalt_score: f64,
    pub shot_setting: ShotSetting,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AggregateError {
    #[error("cannot aggregate an empty result list")]
    Empty,
}

/// Means over the results. Hit rates are integer counts over `n`; the Gestalt
/// sum runs over the values in sorted order so the result does not depend
/// on the order in which results were collected.
pub fn aggregate(results: &[EvalResult], shot: ShotSetting) -> Result<RunMetrics, AggregateError> {
    if results.is_empty() {
        return Err(AggregateError::Empty);
    }
    let n = results.len();
    let acc = results.iter().filter(|r| r.accuracy_hit).count();
    let exact = results.iter().filter(|r| r.exact_match_hit).count();
    let mut values: Vec<f64> = results.iter().map(|r| r.gestalt_value).collect();
    values.sort_by(f64::total_cmp);
    let sum: f64 = values.iter().sum();
    Ok(RunMetrics {
        n_questions: n,
        accuracy: acc as f64 / n as f64,
        exact_match: exact as f64 / n as f64,
        gestalt_score: (sum / n as f64).clamp(0.0, 1.0),
        shot_setting: shot,
    })
}

/// Writes results as JSON Lines.
pub fn write_results(results: &[EvalResult]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in results {
        serde_json::to_writer(&mut out, r).expect("in-memory JSON write");
        out.push(b'\n');
    }
    out
}
