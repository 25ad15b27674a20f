//! Alpaca-style prompt rendering for 0-shot and 1-shot evaluation.
//!
//! A rendered block looks like
//!
//! ```text
//! ### Instruction:
//! <problem_text>
//!
//! ### Input:
//! a: <choice a>
//! b: <choice b>
//!
//! ### Response:
//! ```
//!
//! A 0-shot prompt is the preamble followed by the open block for the target
//! question. A 1-shot prompt prepends the exemplar as a completed block, so
//! the 0-shot prompt is always an exact suffix of the 1-shot one.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Question;
use crate::metrics::ShotSetting;

pub const INSTRUCTION_HEADER: &str = "### Instruction:";
pub const INPUT_HEADER: &str = "### Input:";
pub const RESPONSE_HEADER: &str = "### Response:";

const PREAMBLE_EN: &str = "Below is a medical examination question. Read the question under \
Instruction and the answer choices under Input, then answer with the text of the correct choice.";
const PREAMBLE_JA: &str =
    "以下は医学に関する試験問題です。指示の問題文と入力の選択肢を読み、正しい選択肢の文章で答えてください。";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    #[default]
    Ja,
    En,
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::Ja => "ja",
            Language::En => "en",
        })
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ja" => Ok(Language::Ja),
            "en" => Ok(Language::En),
            other => Err(format!("unknown template language {other:?} (ja|en)")),
        }
    }
}

/// A held-out worked example for 1-shot prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub question: Question,
    pub answer_text: String,
}

impl Exemplar {
    /// Uses the exemplar's correct choice texts, one per line, as the answer.
    pub fn from_question(question: Question) -> Self {
        let answer_text = question
            .answer_texts()
            .map(|(_, t)| t)
            .collect::<Vec<_>>()
            .join("\n");
        Self {
            question,
            answer_text,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("1-shot rendering needs an exemplar")]
    MissingExemplar,
    #[error("template headers must be non-empty and distinct")]
    BadHeaders,
    #[error("template file: {0}")]
    TemplateFile(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub language: Language,
    pub instruction_header: String,
    pub input_header: String,
    pub response_header: String,
    pub preamble: Option<String>,
    pub exemplar: Option<Exemplar>,
}

impl PromptTemplate {
    pub fn builtin(language: Language) -> Self {
        let preamble = match language {
            Language::Ja => PREAMBLE_JA,
            Language::En => PREAMBLE_EN,
        };
        Self {
            language,
            instruction_header: INSTRUCTION_HEADER.into(),
            input_header: INPUT_HEADER.into(),
            response_header: RESPONSE_HEADER.into(),
            preamble: Some(preamble.into()),
            exemplar: None,
        }
    }

    pub fn with_exemplar(mut self, exemplar: Exemplar) -> Self {
        self.exemplar = Some(exemplar);
        self
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let h = [
            self.instruction_header.trim(),
            self.input_header.trim(),
            self.response_header.trim(),
        ];
        if h.iter().any(|s| s.is_empty()) || h[0] == h[1] || h[1] == h[2] || h[0] == h[2] {
            return Err(PromptError::BadHeaders);
        }
        Ok(())
    }

    /// Reads a plain-text template with `{instruction}`, `{input}` and
    /// `{response}` placeholders, each on its own line. The nearest non-blank
    /// line above a placeholder is taken as its header; text above the
    /// instruction header is the preamble.
    pub fn parse(text: &str, language: Language) -> Result<Self, PromptError> {
        let lines: Vec<&str> = text.lines().collect();
        let find = |name: &str| {
            let ph = format!("{{{name}}}");
            let at = lines
                .iter()
                .position(|l| l.trim() == ph)
                .ok_or_else(|| PromptError::TemplateFile(format!("missing {ph} line")))?;
            let header = lines[..at]
                .iter()
                .rposition(|l| !l.trim().is_empty())
                .ok_or_else(|| PromptError::TemplateFile(format!("no header above {ph}")))?;
            Ok::<_, PromptError>((header, lines[header].trim().to_owned()))
        };
        let (ins_line, instruction_header) = find("instruction")?;
        let (inp_line, input_header) = find("input")?;
        let (res_line, response_header) = find("response")?;
        if !(ins_line < inp_line && inp_line < res_line) {
            return Err(PromptError::TemplateFile(
                "placeholders must appear in the order instruction, input, response".into(),
            ));
        }
        let preamble = lines[..ins_line].join("\n").trim().to_owned();
        let t = Self {
            language,
            instruction_header,
            input_header,
            response_header,
            preamble: (!preamble.is_empty()).then_some(preamble),
            exemplar: None,
        };
        t.validate()?;
        Ok(t)
    }

    /// The template in the placeholder file format accepted by [`parse`].
    ///
    /// [`parse`]: PromptTemplate::parse
    pub fn to_template_text(&self) -> String {
        let mut out = String::new();
        if let Some(p) = &self.preamble {
            out.push_str(p);
            out.push_str("\n\n");
        }
        out.push_str(&format!(
            "{}\n{{instruction}}\n\n{}\n{{input}}\n\n{}\n{{response}}\n",
            self.instruction_header, self.input_header, self.response_header
        ));
        out
    }

    fn block(&self, q: &Question, answer: Option<&str>) -> String {
        let mut out = String::new();
        out.push_str(&self.instruction_header);
        out.push('\n');
        out.push_str(&q.problem_text);
        out.push_str("\n\n");
        out.push_str(&self.input_header);
        out.push('\n');
        for (label, text) in &q.choices {
            out.push_str(&format!("{label}: {text}\n"));
        }
        out.push('\n');
        out.push_str(&self.response_header);
        out.push('\n');
        if let Some(a) = answer {
            out.push_str(a);
            out.push_str("\n\n");
        }
        out
    }

    /// The completed exemplar block that a 1-shot prompt starts with.
    pub fn exemplar_block(&self) -> Result<String, PromptError> {
        let ex = self.exemplar.as_ref().ok_or(PromptError::MissingExemplar)?;
        Ok(self.block(&ex.question, Some(&ex.answer_text)))
    }

    pub fn render(&self, q: &Question, shot: ShotSetting) -> Result<String, PromptError> {
        self.validate()?;
        let mut out = match shot {
            ShotSetting::ZeroShot => String::new(),
            ShotSetting::OneShot => self.exemplar_block()?,
        };
        if let Some(p) = &self.preamble {
            out.push_str(p);
            out.push_str("\n\n");
        }
        out.push_str(&self.block(q, None));
        Ok(out)
    }
}
