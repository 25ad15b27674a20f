use medqa_eval::gestalt::{Normalization, SimilarityMode, SimilarityVariant};
use medqa_eval::metrics::{RunMetrics, ShotSetting};
use medqa_eval::report::{build_report, display_value, ReportError, ReportFormat, ReportInput, RunReport};

const GOLDEN_CHATGPT: &str = include_str!("golden/chatgpt_column.md");

fn input(name: &str, shot: ShotSetting, [acc, exact, gestalt]: [f64; 3], hours: Option<f64>) -> ReportInput {
    ReportInput {
        config_name: name.into(),
        dataset_name: "IgakuQA".into(),
        dataset_digest: "digest".into(),
        mode: SimilarityMode::default(),
        template_language: None,
        generation_params: None,
        training_hours: hours,
        manifest_digest: format!("{name}-{}", shot.short()),
        metrics: RunMetrics {
            n_questions: 1000,
            accuracy: acc,
            exact_match: exact,
            gestalt_score: gestalt,
            shot_setting: shot,
        },
    }
}

fn chatgpt() -> ReportInput {
    input("ChatGPT", ShotSetting::ZeroShot, [0.438, 0.112, 0.369], None)
}

#[test]
fn chatgpt_column_matches_golden_file() {
    let report = build_report(&[chatgpt()], "2024-01-01T00:00:00Z").unwrap();
    let md = String::from_utf8(report.emit(ReportFormat::Markdown)).unwrap();
    assert_eq!(md, GOLDEN_CHATGPT);
    assert_eq!(md.lines().filter(|l| l.contains("(0s)") || l.contains("(1s)")).count(), 6);
}

type Column = (&'static str, [f64; 3], Option<[f64; 3]>, Option<f64>);

/// Columns, 0-shot rows, 1-shot rows and training hours of the published
/// comparison table.
fn published() -> Vec<Column> {
    vec![
        ("OpenCALM-7B 0", [0.222, 0.002, 0.033], Some([0.227, 0.009, 0.053]), None),
        ("OpenCALM-7B 1k", [0.219, 0.019, 0.114], Some([0.244, 0.070, 0.186]), Some(4.6)),
        ("OpenCALM-7B 3k", [0.213, 0.047, 0.141], Some([0.196, 0.026, 0.087]), Some(24.0)),
        ("OpenCALM-7B 10k", [0.239, 0.039, 0.078], Some([0.223, 0.019, 0.078]), Some(37.0)),
        ("MedCALM 0", [0.236, 0.028, 0.032], Some([0.207, 0.021, 0.028]), None),
        ("MedCALM 1k", [0.216, 0.029, 0.096], Some([0.188, 0.0, 0.0]), Some(8.9)),
        ("MedCALM 3k", [0.214, 0.029, 0.113], Some([0.188, 0.001, 0.002]), Some(23.7)),
        ("MedCALM 10k", [0.223, 0.034, 0.085], Some([0.204, 0.019, 0.035]), Some(58.4)),
        ("Llama2-70B 0", [0.216, 0.017, 0.071], Some([0.244, 0.045, 0.247]), None),
        ("Llama2-70B 0.9k", [0.295, 0.038, 0.276], Some([0.296, 0.057, 0.331]), Some(12.7)),
        ("Llama2-70B 3k", [0.285, 0.045, 0.287], Some([0.267, 0.056, 0.314]), Some(42.4)),
        ("ChatGPT", [0.438, 0.112, 0.369], None, None),
    ]
}

fn published_inputs() -> Vec<ReportInput> {
    let mut runs = Vec::new();
    for (name, zero, one, hours) in published() {
        runs.push(input(name, ShotSetting::ZeroShot, zero, hours));
        if let Some(one) = one {
            runs.push(input(name, ShotSetting::OneShot, one, hours));
        }
    }
    runs
}

#[test]
fn published_table_bold_pattern_is_reproduced() {
    let report = build_report(&published_inputs(), "t").unwrap();
    let bold: Vec<Vec<usize>> = report
        .rows
        .iter()
        .map(|r| r.cells.iter().enumerate().filter(|(_, c)| c.top2).map(|(i, _)| i).collect())
        .collect();
    assert_eq!(
        bold,
        vec![
            vec![9, 11],
            vec![2, 11],
            vec![10, 11],
            vec![9, 10],
            vec![1, 9],
            vec![9, 10],
        ]
    );
    let md = String::from_utf8(report.emit(ReportFormat::Markdown)).unwrap();
    assert!(md.contains("| Training hours | - | 4.6 | 24.0 | 37.0 | - | 8.9 | 23.7 | 58.4 | - | 12.7 | 42.4 | - |\n"), "{md}");
    assert!(md.contains("| Gestalt score (1s) | .053 | .186 | .087 | .078 | .028 | .000 | .002 |"), "{md}");
}

#[test]
fn three_columns_mark_two() {
    let runs: Vec<_> = [("x", 0.1), ("y", 0.2), ("z", 0.3)]
        .iter()
        .map(|(n, v)| input(n, ShotSetting::ZeroShot, [*v; 3], None))
        .collect();
    let report = build_report(&runs, "t").unwrap();
    for row in &report.rows[..3] {
        let marks: Vec<bool> = row.cells.iter().map(|c| c.top2).collect();
        assert_eq!(marks, [false, true, true]);
    }
    for row in &report.rows[3..] {
        assert!(row.cells.iter().all(|c| c.value.is_none() && !c.top2));
    }
}

#[test]
fn display_ties_are_marked_together() {
    let runs: Vec<_> = [("x", 0.5), ("y", 0.2991), ("z", 0.2994), ("w", 0.1)]
        .iter()
        .map(|(n, v)| input(n, ShotSetting::ZeroShot, [*v; 3], None))
        .collect();
    let report = build_report(&runs, "t").unwrap();
    let marks: Vec<bool> = report.rows[0].cells.iter().map(|c| c.top2).collect();
    assert_eq!(marks, [true, true, true, false]);
}

#[test]
fn display_rounds_half_up() {
    assert_eq!(display_value(0.4375), ".438");
    assert_eq!(display_value(0.0005), ".001");
    assert_eq!(display_value(0.0004999), ".000");
    assert_eq!(display_value(1.0), "1.000");
    assert_eq!(display_value(0.9996), "1.000");
}

#[test]
fn csv_and_json_carry_full_precision() {
    let mut runs = published_inputs();
    runs[0].metrics.accuracy = 0.22249;
    let report = build_report(&runs, "2024-01-01T00:00:00Z").unwrap();
    let csv = String::from_utf8(report.emit(ReportFormat::Csv)).unwrap();
    assert!(csv.starts_with("metric,shot,config,value,display,top2\n"));
    assert!(csv.contains("\nAccuracy,0s,OpenCALM-7B 0,0.22249,0.222,false\n"), "{csv}");
    assert!(csv.contains("\nAccuracy,0s,ChatGPT,0.438,0.438,true\n"), "{csv}");
    assert!(csv.contains("\nAccuracy,1s,ChatGPT,,-,false\n"), "{csv}");
    assert!(csv.contains("\nTraining hours,,MedCALM 10k,58.4,58.4,false\n"), "{csv}");

    let json = report.emit(ReportFormat::Json);
    let back = RunReport::from_json(&json).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.rows[0].cells[0].value, Some(0.22249));
    assert_eq!(report.emit(ReportFormat::Json), json);
    assert_eq!(report.emit(ReportFormat::Markdown), report.emit(ReportFormat::Markdown));
}

#[test]
fn incomparable_runs_are_refused() {
    let mut other = chatgpt();
    other.config_name = "B".into();
    other.dataset_digest = "other".into();
    assert!(matches!(build_report(&[chatgpt(), other.clone()], "t"), Err(ReportError::NotComparable(_))));

    other.dataset_digest = "digest".into();
    other.mode = SimilarityMode::new(SimilarityVariant::LcsRatio, Normalization::TrimOnly);
    assert!(matches!(build_report(&[chatgpt(), other], "t"), Err(ReportError::NotComparable(_))));

    assert_eq!(build_report(&[], "t"), Err(ReportError::Empty));
    assert!(matches!(build_report(&[chatgpt(), chatgpt()], "t"), Err(ReportError::DuplicateRun { .. })));
}
