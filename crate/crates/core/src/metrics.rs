//! Generation-quality metrics: sequence similarity, unparsed rate, and
//! made-up API / parameter rates, plus deltas against a baseline run.

use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::catalog::{validate_flow, ApiCatalog};
use crate::dsl::{extract_api_sequence, parse_flow, Flow};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("cannot aggregate an empty outcome list")]
    Empty,
    #[error("reports cover different sample counts (baseline {baseline}, candidate {candidate})")]
    MismatchedTotals { baseline: usize, candidate: usize },
}

/// Per-sample scoring result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOutcome {
    pub sample_id: String,
    pub parsed: bool,
    pub has_made_up_function: bool,
    pub has_made_up_parameter: bool,
    pub similarity: f64,
}

impl EvaluationOutcome {
    pub fn unparsed(sample_id: impl Into<String>) -> Self {
        Self {
            sample_id: sample_id.into(),
            parsed: false,
            has_made_up_function: false,
            has_made_up_parameter: false,
            similarity: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricCounts {
    pub total: usize,
    pub parsed: usize,
    pub unparsed: usize,
    pub hallucinated_fn: usize,
    pub hallucinated_param: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub average_similarity: f64,
    pub unparsed_pct: f64,
    pub made_up_api_pct: f64,
    pub made_up_param_pct: f64,
    pub counts: MetricCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub baseline_name: String,
    pub candidate_name: String,
    pub average_similarity: f64,
    pub unparsed_pct: f64,
    pub made_up_api_pct: f64,
    pub made_up_param_pct: f64,
}

/// Length of the longest common subsequence.
pub fn lcss_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            row[j + 1] = if x == y { prev[j] + 1 } else { row[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

/// LCSS of the two call sequences over the longer sequence's length.
/// Two empty sequences score 1.
pub fn sequence_similarity<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    lcss_length(a, b) as f64 / longest as f64
}

pub fn flow_similarity(prediction: &Flow, truth: &Flow) -> f64 {
    sequence_similarity(&extract_api_sequence(prediction), &extract_api_sequence(truth))
}

/// Jaccard index over the sets of called function names.
pub fn jaccard_program_similarity(a: &Flow, b: &Flow) -> f64 {
    let left: BTreeSet<&str> = a.api_calls().into_iter().map(|c| c.qualified_name()).collect();
    let right: BTreeSet<&str> = b.api_calls().into_iter().map(|c| c.qualified_name()).collect();
    let union = left.union(&right).count();
    if union == 0 {
        return 1.0;
    }
    left.intersection(&right).count() as f64 / union as f64
}

/// Scores one generated flow against its reference.
///
/// Unparseable output and output calling unknown functions score 0.
/// Unknown parameter keys are flagged but keep the similarity score.
/// Without a catalog no hallucination checks run.
pub fn score_sample(
    sample_id: &str,
    prediction_text: &str,
    truth: &Flow,
    catalog: Option<&ApiCatalog>,
) -> EvaluationOutcome {
    let Ok(prediction) = parse_flow(prediction_text) else {
        return EvaluationOutcome::unparsed(sample_id);
    };
    let validation = catalog.map(|c| validate_flow(&prediction, c)).unwrap_or_default();
    let has_made_up_function = !validation.made_up_functions.is_empty();
    let similarity = if has_made_up_function {
        0.0
    } else {
        flow_similarity(&prediction, truth)
    };
    EvaluationOutcome {
        sample_id: sample_id.to_string(),
        parsed: true,
        has_made_up_function,
        has_made_up_parameter: !validation.made_up_parameters.is_empty(),
        similarity,
    }
}

fn percent(count: usize, of: usize) -> f64 {
    if of == 0 {
        0.0
    } else {
        count as f64 / of as f64 * 100.0
    }
}

/// Folds outcomes into a report. Similarity is averaged over all samples;
/// made-up rates are relative to parsed flows (0 when nothing parsed).
pub fn aggregate(outcomes: &[EvaluationOutcome]) -> Result<MetricsReport, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut counts = MetricCounts {
        total: outcomes.len(),
        ..Default::default()
    };
    let mut similarity_sum = 0.0;
    for o in outcomes {
        similarity_sum += o.similarity;
        if !o.parsed {
            counts.unparsed += 1;
            continue;
        }
        counts.parsed += 1;
        if o.has_made_up_function {
            counts.hallucinated_fn += 1;
        }
        if o.has_made_up_parameter {
            counts.hallucinated_param += 1;
        }
    }
    Ok(MetricsReport {
        average_similarity: similarity_sum / counts.total as f64,
        unparsed_pct: percent(counts.unparsed, counts.total),
        made_up_api_pct: percent(counts.hallucinated_fn, counts.parsed),
        made_up_param_pct: percent(counts.hallucinated_param, counts.parsed),
        counts,
    })
}

/// Candidate minus baseline, per metric.
pub fn delta_report(
    baseline_name: &str,
    baseline: &MetricsReport,
    candidate_name: &str,
    candidate: &MetricsReport,
) -> Result<DeltaReport, MetricsError> {
    if baseline.counts.total != candidate.counts.total {
        return Err(MetricsError::MismatchedTotals {
            baseline: baseline.counts.total,
            candidate: candidate.counts.total,
        });
    }
    Ok(DeltaReport {
        baseline_name: baseline_name.to_string(),
        candidate_name: candidate_name.to_string(),
        average_similarity: candidate.average_similarity - baseline.average_similarity,
        unparsed_pct: candidate.unparsed_pct - baseline.unparsed_pct,
        made_up_api_pct: candidate.made_up_api_pct - baseline.made_up_api_pct,
        made_up_param_pct: candidate.made_up_param_pct - baseline.made_up_param_pct,
    })
}

pub const TABLE_COLUMNS: [&str; 4] = [
    "Avg. Similarity",
    "%Unparsed flows",
    "%Made-up API names",
    "%Made-up parameters",
];

/// One row of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub few_shots: Option<usize>,
    /// Similarity, unparsed %, made-up API %, made-up parameter %.
    pub values: [f64; 4],
}

impl TableRow {
    pub fn absolute(label: impl Into<String>, few_shots: Option<usize>, r: &MetricsReport) -> Self {
        Self {
            label: label.into(),
            few_shots,
            values: [
                r.average_similarity,
                r.unparsed_pct,
                r.made_up_api_pct,
                r.made_up_param_pct,
            ],
        }
    }

    pub fn delta(few_shots: Option<usize>, d: &DeltaReport) -> Self {
        Self {
            label: d.candidate_name.clone(),
            few_shots,
            values: [
                d.average_similarity,
                d.unparsed_pct,
                d.made_up_api_pct,
                d.made_up_param_pct,
            ],
        }
    }
}

/// Two-decimal value; signed when `signed`, with zero printed unsigned.
pub fn format_value(value: f64, signed: bool) -> String {
    let rounded = format!("{:.2}", value.abs());
    if rounded == "0.00" {
        return rounded;
    }
    match (signed, value < 0.0) {
        (_, true) => format!("-{rounded}"),
        (true, false) => format!("+{rounded}"),
        (false, false) => rounded,
    }
}

/// Aligned text table: model label, optional few-shot count, then the
/// four metric columns.
pub fn render_table(rows: &[TableRow], signed: bool) -> String {
    let with_shots = rows.iter().any(|r| r.few_shots.is_some());
    let mut header: Vec<String> = vec!["Model".into()];
    if with_shots {
        header.push("Num. of few-shots".into());
    }
    header.extend(TABLE_COLUMNS.iter().map(|c| c.to_string()));

    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut cells = vec![r.label.clone()];
            if with_shots {
                cells.push(r.few_shots.map(|k| k.to_string()).unwrap_or_else(|| "-".into()));
            }
            cells.extend(r.values.iter().map(|v| format_value(*v, signed)));
            cells
        })
        .collect();

    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            body.iter()
                .map(|row| row[i].chars().count())
                .chain([header[i].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();

    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let mut text = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                text.push_str("  ");
            }
            let pad = widths[i] - cell.chars().count();
            if i == 0 {
                text.push_str(cell);
                text.push_str(&" ".repeat(pad));
            } else {
                text.push_str(&" ".repeat(pad));
                text.push_str(cell);
            }
        }
        let _ = writeln!(out, "{}", text.trim_end());
    };
    line(&header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&rule);
    for row in &body {
        line(row);
    }
    out
}
