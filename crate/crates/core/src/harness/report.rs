use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::RunRecord;
use super::HarnessError;
use crate::metrics::{delta_report, render_table, DeltaReport, MetricsReport, TableRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub name: String,
    pub few_shots: Option<usize>,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub few_shots: Option<usize>,
    #[serde(flatten)]
    pub delta: DeltaReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub baseline: Option<String>,
    pub experiments: Vec<ExperimentRow>,
    /// Every experiment except the baseline, minus the baseline.
    pub deltas: Vec<DeltaRow>,
}

/// Rendered report: JSON and aligned text tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Reports {
    pub file: ReportFile,
    pub json: String,
    pub text: String,
}

/// Builds the absolute table and, given a baseline, the signed delta table.
pub fn emit_reports(records: &[RunRecord], baseline: Option<&str>) -> Result<Reports, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Config("no runs to report".into()));
    }
    let experiments: Vec<ExperimentRow> = records
        .iter()
        .map(|r| ExperimentRow {
            name: r.experiment.clone(),
            few_shots: r.few_shots,
            report: r.report.clone(),
        })
        .collect();

    let mut deltas = Vec::new();
    if let Some(name) = baseline {
        let base = experiments
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| HarnessError::MissingBaseline(name.to_string()))?;
        for e in experiments.iter().filter(|e| e.name != name) {
            deltas.push(DeltaRow {
                few_shots: e.few_shots,
                delta: delta_report(name, &base.report, &e.name, &e.report)?,
            });
        }
    }

    let absolute: Vec<TableRow> = experiments
        .iter()
        .map(|e| TableRow::absolute(&e.name, e.few_shots, &e.report))
        .collect();
    let mut text = format!("Results\n\n{}", render_table(&absolute, false));
    if let Some(name) = baseline {
        let rows: Vec<TableRow> = deltas.iter().map(|d| TableRow::delta(d.few_shots, &d.delta)).collect();
        text.push_str(&format!("\nChange relative to {name}\n\n"));
        if rows.is_empty() {
            text.push_str("(no other experiments)\n");
        } else {
            text.push_str(&render_table(&rows, true));
        }
    }

    let file = ReportFile {
        baseline: baseline.map(String::from),
        experiments,
        deltas,
    };
    let json = serde_json::to_string_pretty(&file).expect("report serializes") + "\n";
    Ok(Reports { file, json, text })
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `report.json`, `report.txt`, `runs.json` and `timing.json` into
/// `dir`. All but the timing file are identical across repeated
/// deterministic runs.
pub fn write_outputs(dir: &Path, records: &[RunRecord], reports: &Reports) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write(&dir.join("report.json"), &reports.json)?;
    write(&dir.join("report.txt"), &reports.text)?;
    let runs = serde_json::to_string_pretty(records).expect("runs serialize") + "\n";
    write(&dir.join("runs.json"), &runs)?;
    let timing: Vec<serde_json::Value> = records
        .iter()
        .map(|r| {
            serde_json::json!({
                "experiment": r.experiment,
                "elapsed_ms": r.elapsed_ms,
                "sample_latency_ms": r.samples.iter().map(|s| (s.id.clone(), serde_json::Value::from(s.latency_ms))).collect::<serde_json::Map<_, _>>(),
            })
        })
        .collect();
    write(
        &dir.join("timing.json"),
        &(serde_json::to_string_pretty(&timing).expect("timing serializes") + "\n"),
    )
}

/// Reads the `runs.json` written by [`write_outputs`].
pub fn load_runs(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}
