//! Comparison tables across model configurations: one column per
//! configuration, six metric rows (three metrics × 0-shot/1-shot) plus an
//! optional training-hours row. The top two cells of each metric row are
//! marked.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gestalt::SimilarityMode;
use crate::inference::GenerationParams;
use crate::metrics::{RunMetrics, ShotSetting};
use crate::prompt::Language;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    ExactMatch,
    GestaltScore,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Accuracy, Metric::ExactMatch, Metric::GestaltScore];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Accuracy => "Accuracy",
            Metric::ExactMatch => "Exact match",
            Metric::GestaltScore => "Gestalt score",
        }
    }

    fn of(self, m: &RunMetrics) -> f64 {
        match self {
            Metric::Accuracy => m.accuracy,
            Metric::ExactMatch => m.exact_match,
            Metric::GestaltScore => m.gestalt_score,
        }
    }
}

/// Row order is fixed: all 0-shot rows, then all 1-shot rows.
pub fn row_keys() -> Vec<(Metric, ShotSetting)> {
    [ShotSetting::ZeroShot, ShotSetting::OneShot]
        .into_iter()
        .flat_map(|s| Metric::ALL.into_iter().map(move |m| (m, s)))
        .collect()
}

/// Thousandths, rounded half-up on the exact binary value of `x`.
pub fn round_millis(x: f64) -> i64 {
    let mut k = (x * 1000.0).floor() as i64;
    // Correct the estimate so that k <= 1000x < k + 1 holds exactly.
    while x.mul_add(1000.0, -(k as f64)) < 0.0 {
        k -= 1;
    }
    while x.mul_add(1000.0, -((k + 1) as f64)) >= 0.0 {
        k += 1;
    }
    // Round up iff 2000x - (2k + 1) >= 0, evaluated with a single rounding.
    if x.mul_add(2000.0, -((2 * k + 1) as f64)) >= 0.0 {
        k + 1
    } else {
        k
    }
}

/// Three-decimal display without a leading zero: `.438`, `1.000`.
pub fn display_value(x: f64) -> String {
    let m = round_millis(x);
    let sign = if m < 0 { "-" } else { "" };
    let m = m.abs();
    let whole = m / 1000;
    let frac = m % 1000;
    if whole == 0 {
        format!("{sign}.{frac:03}")
    } else {
        format!("{sign}{whole}.{frac:03}")
    }
}

/// Three-decimal display with the leading zero, for CSV.
pub fn display_value_standard(x: f64) -> String {
    let m = round_millis(x);
    format!("{}{}.{:03}", if m < 0 { "-" } else { "" }, m.abs() / 1000, m.abs() % 1000)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub value: Option<f64>,
    pub top2: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub metric: Metric,
    pub shot: ShotSetting,
    pub cells: Vec<Cell>,
}

impl ReportRow {
    pub fn label(&self) -> String {
        format!("{} ({})", self.metric.label(), self.shot.short())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub template_language: Option<Language>,
    pub generation_params: Option<GenerationParams>,
    pub training_hours: Option<f64>,
    /// Digests of the run manifests behind this column, by shot setting.
    pub manifests: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub dataset_name: String,
    pub dataset_digest: String,
    pub similarity_mode: SimilarityMode,
    pub generated_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub columns: Vec<ColumnMeta>,
    pub rows: Vec<ReportRow>,
    pub metadata: ReportMetadata,
}

/// One configuration's results, possibly for both shot settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportInput {
    pub config_name: String,
    pub dataset_name: String,
    pub dataset_digest: String,
    pub mode: SimilarityMode,
    pub template_language: Option<Language>,
    pub generation_params: Option<GenerationParams>,
    pub training_hours: Option<f64>,
    pub manifest_digest: String,
    pub metrics: RunMetrics,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("no runs given")]
    Empty,
    #[error("runs are not comparable: {0}")]
    NotComparable(String),
    #[error("configuration {config} has two {shot} runs")]
    DuplicateRun { config: String, shot: ShotSetting },
    #[error("malformed report JSON: {0}")]
    Json(String),
}

/// Marks every cell whose display value is at least the display value of
/// the second-best cell. Ties at the boundary are all marked, and cells that
/// look equal on screen are never split.
fn mark_top2(cells: &mut [Cell]) {
    let mut shown: Vec<i64> = cells.iter().filter_map(|c| c.value.map(round_millis)).collect();
    shown.sort_unstable_by(|a, b| b.cmp(a));
    let Some(&threshold) = shown.get(1).or(shown.first()) else {
        return;
    };
    for c in cells {
        c.top2 = c.value.is_some_and(|v| round_millis(v) >= threshold);
    }
}

pub fn build_report(runs: &[ReportInput], generated_at: &str) -> Result<RunReport, ReportError> {
    let first = runs.first().ok_or(ReportError::Empty)?;
    for r in runs {
        if r.dataset_digest != first.dataset_digest || r.dataset_name != first.dataset_name {
            return Err(ReportError::NotComparable(format!(
                "dataset {} ({}) vs {} ({})",
                first.dataset_name, first.dataset_digest, r.dataset_name, r.dataset_digest
            )));
        }
        if r.mode != first.mode {
            return Err(ReportError::NotComparable(format!(
                "similarity mode {:?} vs {:?}",
                first.mode, r.mode
            )));
        }
    }

    // Columns in order of first appearance.
    let mut names: Vec<&str> = Vec::new();
    for r in runs {
        if !names.contains(&r.config_name.as_str()) {
            names.push(&r.config_name);
        }
    }
    let mut columns = Vec::with_capacity(names.len());
    let mut per_col: Vec<[Option<&RunMetrics>; 2]> = Vec::with_capacity(names.len());
    for name in &names {
        let mut slots: [Option<&RunMetrics>; 2] = [None, None];
        let mut meta = ColumnMeta {
            name: (*name).to_owned(),
            template_language: None,
            generation_params: None,
            training_hours: None,
            manifests: Vec::new(),
        };
        for r in runs.iter().filter(|r| r.config_name == *name) {
            let slot = &mut slots[r.metrics.shot_setting as usize];
            if slot.is_some() {
                return Err(ReportError::DuplicateRun {
                    config: (*name).to_owned(),
                    shot: r.metrics.shot_setting,
                });
            }
            *slot = Some(&r.metrics);
            meta.template_language = meta.template_language.or(r.template_language);
            meta.generation_params = meta.generation_params.or(r.generation_params);
            meta.training_hours = meta.training_hours.or(r.training_hours);
            meta.manifests.push(r.manifest_digest.clone());
        }
        columns.push(meta);
        per_col.push(slots);
    }

    let rows = row_keys()
        .into_iter()
        .map(|(metric, shot)| {
            let mut cells: Vec<Cell> = per_col
                .iter()
                .map(|slots| Cell {
                    value: slots[shot as usize].map(|m| metric.of(m)),
                    top2: false,
                })
                .collect();
            mark_top2(&mut cells);
            ReportRow { metric, shot, cells }
        })
        .collect();

    Ok(RunReport {
        columns,
        rows,
        metadata: ReportMetadata {
            dataset_name: first.dataset_name.clone(),
            dataset_digest: first.dataset_digest.clone(),
            similarity_mode: first.mode,
            generated_at: generated_at.to_owned(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format {other:?} (md|csv|json)")),
        }
    }
}

fn hours(h: Option<f64>) -> String {
    h.map_or_else(|| "-".to_owned(), |h| format!("{h:.1}"))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

impl RunReport {
    pub fn emit(&self, format: ReportFormat) -> Vec<u8> {
        match format {
            ReportFormat::Markdown => self.to_markdown().into_bytes(),
            ReportFormat::Csv => self.to_csv().into_bytes(),
            ReportFormat::Json => {
                let mut out = serde_json::to_vec_pretty(self).expect("in-memory JSON write");
                out.push(b'\n');
                out
            }
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ReportError> {
        serde_json::from_slice(bytes).map_err(|e| ReportError::Json(e.to_string()))
    }

    fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| Metric |");
        for c in &self.columns {
            let _ = write!(out, " {} |", c.name.replace('|', "\\|"));
        }
        out.push_str("\n|---|");
        for _ in &self.columns {
            out.push_str("---:|");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "| {} |", row.label());
            for cell in &row.cells {
                match (cell.value, cell.top2) {
                    (None, _) => out.push_str(" - |"),
                    (Some(v), true) => {
                        let _ = write!(out, " **{}** |", display_value(v));
                    }
                    (Some(v), false) => {
                        let _ = write!(out, " {} |", display_value(v));
                    }
                }
            }
            out.push('\n');
        }
        out.push_str("| Training hours |");
        for c in &self.columns {
            let _ = write!(out, " {} |", hours(c.training_hours));
        }
        out.push('\n');
        out
    }

    fn to_csv(&self) -> String {
        let mut out = String::from("metric,shot,config,value,display,top2\n");
        for row in &self.rows {
            for (col, cell) in self.columns.iter().zip(&row.cells) {
                let (value, display) = match cell.value {
                    Some(v) => (format!("{v:?}"), display_value_standard(v)),
                    None => (String::new(), "-".to_owned()),
                };
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    csv_field(row.metric.label()),
                    row.shot.short(),
                    csv_field(&col.name),
                    value,
                    display,
                    cell.top2
                );
            }
        }
        for col in &self.columns {
            let _ = writeln!(
                out,
                "Training hours,,{},{},{},false",
                csv_field(&col.name),
                col.training_hours.map_or(String::new(), |h| format!("{h:?}")),
                hours(col.training_hours)
            );
        }
        out
    }
}
