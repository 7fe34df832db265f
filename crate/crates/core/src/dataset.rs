//! (prompt, flow) samples and their line-delimited JSON files.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsl::{parse_flow, Flow, ParseError};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("failed to access {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("{} gold flow(s) failed to parse: {}", .0.len(), .0.iter().map(|(id, e)| format!("{id} ({e})")).collect::<Vec<_>>().join(", "))]
    UnparsedGold(Vec<(String, ParseError)>),
}

/// One natural-language request paired with its reference flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub prompt: String,
    pub flow_text: String,
    pub flow: Flow,
}

impl Sample {
    pub fn new(
        id: impl Into<String>,
        prompt: impl Into<String>,
        flow_text: impl Into<String>,
    ) -> Result<Self, ParseError> {
        let flow_text = flow_text.into();
        let flow = parse_flow(&flow_text)?;
        Ok(Self {
            id: id.into(),
            prompt: prompt.into(),
            flow_text,
            flow,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    id: String,
    prompt: String,
    flow: String,
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses JSONL text with `id`, `prompt` and `flow` fields per line.
pub fn parse_dataset(text: &str) -> Result<Vec<Sample>, DatasetError> {
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    let mut rejected = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord = serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(DatasetError::DuplicateId(record.id));
        }
        match Sample::new(record.id.clone(), record.prompt, record.flow) {
            Ok(sample) => samples.push(sample),
            Err(e) => rejected.push((record.id, e)),
        }
    }
    if !rejected.is_empty() {
        return Err(DatasetError::UnparsedGold(rejected));
    }
    Ok(samples)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Sample>, DatasetError> {
    parse_dataset(&read(path.as_ref())?)
}

pub fn write_dataset(path: impl AsRef<Path>, samples: &[Sample]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = Vec::new();
    for s in samples {
        let record = SampleRecord {
            id: s.id.clone(),
            prompt: s.prompt.clone(),
            flow: s.flow_text.clone(),
        };
        serde_json::to_writer(&mut out, &record).expect("record serializes");
        out.push(b'\n');
    }
    fs::File::create(path).and_then(|mut f| f.write_all(&out)).map_err(io)
}

#[derive(Debug, Deserialize)]
struct PredictionRecord {
    id: String,
    #[serde(alias = "flow")]
    prediction: String,
}

/// Raw model outputs keyed by sample id. Each line carries `id` and either
/// `prediction` or `flow`; the text is not parsed here.
pub fn parse_predictions(text: &str) -> Result<BTreeMap<String, String>, DatasetError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord = serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        if out.contains_key(&record.id) {
            return Err(DatasetError::DuplicateId(record.id));
        }
        out.insert(record.id, record.prediction);
    }
    Ok(out)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>, DatasetError> {
    parse_predictions(&read(path.as_ref())?)
}
