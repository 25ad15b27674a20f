//! Scoring free-text model answers to multiple-choice medical exam
//! questions, and generating instruction-tuning data from source articles.
//!
//! The scoring path is `corpus` (datasets) → `prompt` (rendering) →
//! `inference` (responses) → `metrics` (per-question scores and means) →
//! `report` (comparison tables). `gestalt` holds the similarity kernel used
//! by both accuracy and the Gestalt score; `pipeline` ties the stages
//! together for the command-line tool.

pub mod corpus;
pub mod error;
pub mod gestalt;
pub mod inference;
pub mod instructgen;
pub mod metrics;
pub mod pipeline;
pub mod prompt;
pub mod report;

pub use corpus::{parse_dataset, write_dataset, ChoiceLabel, Dataset, Question, QuestionRef};
pub use error::{Error, Result};
pub use gestalt::{closest_choice, similarity, Normalization, SimilarityMode, SimilarityVariant};
pub use metrics::{aggregate, eval_question, EvalResult, RunMetrics, ScoringOptions, ShotSetting};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
