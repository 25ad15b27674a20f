//! Multiple-choice QA datasets in the IgakuQA / JJSIMQA record layout.
//!
//! Each record is a JSON object with `problem_id` (optional), `problem_text`,
//! `choices` (label -> text), `text_only` (defaults to `true`) and `answer`
//! (array of labels). Input may be a JSON array of records or JSON Lines;
//! output is always JSON Lines. Fields not listed above are carried through
//! untouched.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// A choice label: a single lowercase ASCII letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChoiceLabel(char);

impl ChoiceLabel {
    pub fn new(c: char) -> Option<Self> {
        c.is_ascii_lowercase().then_some(Self(c))
    }

    pub fn as_char(self) -> char {
        self.0
    }
}

impl fmt::Display for ChoiceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for ChoiceLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => {
                ChoiceLabel::new(c).ok_or_else(|| format!("invalid choice label {s:?}"))
            }
            _ => Err(format!("invalid choice label {s:?}")),
        }
    }
}

impl Serialize for ChoiceLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut buf = [0u8; 4];
        serializer.serialize_str(self.0.encode_utf8(&mut buf))
    }
}

impl<'de> Deserialize<'de> for ChoiceLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How a question is referred to outside the dataset: its `problem_id` when
/// it has one, otherwise its zero-based position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QuestionRef {
    Id(String),
    Index(usize),
}

impl fmt::Display for QuestionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuestionRef::Id(id) => f.write_str(id),
            QuestionRef::Index(i) => write!(f, "#{i}"),
        }
    }
}

/// One multiple-choice item.
#[derive(Debug, Clone, PartialEq)]
pub struct Question {
    pub problem_id: Option<String>,
    pub problem_text: String,
    pub choices: BTreeMap<ChoiceLabel, String>,
    pub text_only: bool,
    pub answer: BTreeSet<ChoiceLabel>,
    /// Unrecognised fields, kept in input order.
    pub extra: Map<String, Value>,
}

impl Question {
    pub fn choice_text(&self, label: ChoiceLabel) -> Option<&str> {
        self.choices.get(&label).map(String::as_str)
    }

    /// Texts of the correct choices, in label order.
    pub fn answer_texts(&self) -> impl Iterator<Item = (ChoiceLabel, &str)> + '_ {
        self.answer
            .iter()
            .filter_map(|l| self.choice_text(*l).map(|t| (*l, t)))
    }

    /// Checks the record-level invariants. Returns the offending field and a
    /// message on failure.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.choices.is_empty() {
            return Err(("choices", "no choices given".into()));
        }
        for (label, text) in &self.choices {
            if text.trim().is_empty() {
                return Err(("choices", format!("choice {label} has empty text")));
            }
        }
        if self.answer.is_empty() {
            return Err(("answer", "answer list is empty".into()));
        }
        if let Some(missing) = self.answer.iter().find(|l| !self.choices.contains_key(l)) {
            return Err((
                "answer",
                format!("answer label \"{missing}\" is not among the choices"),
            ));
        }
        Ok(())
    }

    fn to_value(&self) -> Value {
        let mut obj = Map::new();
        if let Some(id) = &self.problem_id {
            obj.insert("problem_id".into(), Value::String(id.clone()));
        }
        obj.insert("problem_text".into(), Value::String(self.problem_text.clone()));
        let choices: Map<String, Value> = self
            .choices
            .iter()
            .map(|(l, t)| (l.to_string(), Value::String(t.clone())))
            .collect();
        obj.insert("choices".into(), Value::Object(choices));
        obj.insert("text_only".into(), Value::Bool(self.text_only));
        obj.insert(
            "answer".into(),
            Value::Array(self.answer.iter().map(|l| Value::String(l.to_string())).collect()),
        );
        for (k, v) in &self.extra {
            obj.insert(k.clone(), v.clone());
        }
        Value::Object(obj)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub questions: Vec<Question>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, questions: Vec<Question>) -> Self {
        Self {
            name: name.into(),
            questions,
        }
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn question_ref(&self, index: usize) -> QuestionRef {
        match &self.questions[index].problem_id {
            Some(id) => QuestionRef::Id(id.clone()),
            None => QuestionRef::Index(index),
        }
    }

    /// Resolves a reference back to a position in the dataset.
    pub fn position(&self, r: &QuestionRef) -> Option<usize> {
        match r {
            QuestionRef::Id(id) => self
                .questions
                .iter()
                .position(|q| q.problem_id.as_deref() == Some(id.as_str())),
            QuestionRef::Index(i) => {
                (*i < self.questions.len() && self.questions[*i].problem_id.is_none())
                    .then_some(*i)
            }
        }
    }

    pub fn find_id(&self, id: &str) -> Option<&Question> {
        self.questions
            .iter()
            .find(|q| q.problem_id.as_deref() == Some(id))
    }

    /// Hex SHA-256 of the canonical JSON Lines serialisation.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(write_dataset(self)))
    }
}

/// One problem found while reading a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    /// Zero-based record position.
    pub index: usize,
    /// One-based source line, when the container is JSON Lines.
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "record {}", self.index)?;
        if let Some(line) = self.line {
            write!(f, " (line {line})")?;
        }
        if let Some(field) = &self.field {
            write!(f, ", field `{field}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("dataset is not valid UTF-8: {0}")]
    Encoding(#[from] std::str::Utf8Error),
    #[error("malformed JSON array at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{} invalid record(s); first: {}", .0.len(), .0[0])]
    Records(Vec<RecordError>),
}

impl CorpusError {
    pub fn record_errors(&self) -> &[RecordError] {
        match self {
            CorpusError::Records(errs) => errs,
            _ => &[],
        }
    }
}

/// Parses a dataset from a JSON array or JSON Lines byte stream.
///
/// Every record is checked; all problems are collected and returned together
/// so that `validate` can list them. No partially valid dataset is returned.
pub fn parse_dataset(raw: &[u8], name: &str) -> Result<Dataset, CorpusError> {
    let text = std::str::from_utf8(raw)?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);

    let records: Vec<(Option<usize>, Result<Value, String>)> =
        if text.trim_start().starts_with('[') {
            let values: Vec<Value> =
                serde_json::from_str(text).map_err(|e| CorpusError::Syntax {
                    line: e.line(),
                    column: e.column(),
                    message: e.to_string(),
                })?;
            values.into_iter().map(|v| (None, Ok(v))).collect()
        } else {
            text.lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(n, l)| {
                    (
                        Some(n + 1),
                        serde_json::from_str::<Value>(l).map_err(|e| e.to_string()),
                    )
                })
                .collect()
        };

    let mut errors = Vec::new();
    let mut questions = Vec::with_capacity(records.len());
    let mut seen_ids = HashSet::new();
    for (index, (line, value)) in records.into_iter().enumerate() {
        let err = |field: Option<&str>, message: String| RecordError {
            index,
            line,
            field: field.map(str::to_owned),
            message,
        };
        let value = match value {
            Ok(v) => v,
            Err(msg) => {
                errors.push(err(None, format!("malformed JSON: {msg}")));
                continue;
            }
        };
        match question_from_value(value) {
            Ok(q) => {
                if let Err((field, msg)) = q.validate() {
                    errors.push(err(Some(field), msg));
                    continue;
                }
                if let Some(id) = &q.problem_id {
                    if !seen_ids.insert(id.clone()) {
                        errors.push(err(
                            Some("problem_id"),
                            format!("duplicate problem_id \"{id}\""),
                        ));
                        continue;
                    }
                }
                questions.push(q);
            }
            Err((field, msg)) => errors.push(err(field, msg)),
        }
    }

    if errors.is_empty() {
        Ok(Dataset::new(name, questions))
    } else {
        Err(CorpusError::Records(errors))
    }
}

type FieldError = (Option<&'static str>, String);

fn question_from_value(value: Value) -> Result<Question, FieldError> {
    let Value::Object(mut obj) = value else {
        return Err((None, "record is not a JSON object".into()));
    };

    let problem_id = match obj.shift_remove("problem_id") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if !s.is_empty() => Some(s),
        Some(Value::String(_)) => {
            return Err((Some("problem_id"), "empty problem_id".into()))
        }
        Some(_) => return Err((Some("problem_id"), "expected a string".into())),
    };

    let problem_text = match obj.shift_remove("problem_text") {
        Some(Value::String(s)) => s,
        Some(_) => return Err((Some("problem_text"), "expected a string".into())),
        None => return Err((Some("problem_text"), "missing field".into())),
    };

    let choices = match obj.shift_remove("choices") {
        Some(Value::Object(map)) => {
            let mut choices = BTreeMap::new();
            for (k, v) in map {
                let label: ChoiceLabel = k.parse().map_err(|e| (Some("choices"), e))?;
                let Value::String(text) = v else {
                    return Err((Some("choices"), format!("choice {label} is not a string")));
                };
                choices.insert(label, text);
            }
            choices
        }
        Some(_) => return Err((Some("choices"), "expected an object".into())),
        None => return Err((Some("choices"), "missing field".into())),
    };

    let text_only = match obj.shift_remove("text_only") {
        None | Some(Value::Null) => true,
        Some(Value::Bool(b)) => b,
        Some(_) => return Err((Some("text_only"), "expected a boolean".into())),
    };

    let answer = match obj.shift_remove("answer") {
        Some(Value::Array(items)) => {
            let mut answer = BTreeSet::new();
            for item in items {
                let Value::String(s) = item else {
                    return Err((Some("answer"), "answer labels must be strings".into()));
                };
                let label: ChoiceLabel = s.parse().map_err(|e| (Some("answer"), e))?;
                if !answer.insert(label) {
                    return Err((Some("answer"), format!("label \"{label}\" listed twice")));
                }
            }
            answer
        }
        Some(_) => return Err((Some("answer"), "expected an array of labels".into())),
        None => return Err((Some("answer"), "missing field".into())),
    };

    Ok(Question {
        problem_id,
        problem_text,
        choices,
        text_only,
        answer,
        extra: obj,
    })
}

/// Serialises a dataset as JSON Lines, one question per line.
pub fn write_dataset(d: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    for q in &d.questions {
        serde_json::to_writer(&mut out, &q.to_value()).expect("in-memory JSON write");
        out.push(b'\n');
    }
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub const IGAKU_116A1: &str = r#"{"problem_id": "116A1", "problem_text": "Which of the following is incorrect regarding hypertension caused by obstructive sleep apnea?", "choices": {"a":"It often leads to nocturnal hypertension.", "b":"Weight reduction is recommended for obese patients.", "c":"Alpha-blockers are the first-line choice of medication.", "d":"Morning hypertension is frequently observed in home blood pressure measurements.", "e":"Continuous positive airway pressure (CPAP) therapy is expected to lower blood pressure."}, "text_only": true, "answer": ["c"]}"#;

    pub fn q116a1() -> Question {
        parse_dataset(IGAKU_116A1.as_bytes(), "IgakuQA")
            .unwrap()
            .questions
            .remove(0)
    }
}
