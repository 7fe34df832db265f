use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::generation::{Fallback, HttpCompletionConfig};
use crate::grounding::GroundingConfig;
use crate::retrieval::{Embedder, HashingEmbedder, HttpEmbedder, HttpEmbedderConfig, RetrievalError};

fn default_dimension() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderConfig {
    Hashing {
        #[serde(default = "default_dimension")]
        dimension: usize,
        #[serde(default)]
        seed: u64,
    },
    Http(HttpEmbedderConfig),
}

impl EmbedderConfig {
    pub fn build(&self) -> Result<Box<dyn Embedder>, RetrievalError> {
        Ok(match self {
            EmbedderConfig::Hashing { dimension, seed } => {
                if *dimension == 0 {
                    return Err(RetrievalError::Service("hashing dimension must be positive".into()));
                }
                Box::new(HashingEmbedder::new(*dimension, *seed))
            }
            EmbedderConfig::Http(config) => Box::new(HttpEmbedder::new(config.clone())?),
        })
    }
}

fn default_pretrained() -> EmbedderConfig {
    EmbedderConfig::Hashing {
        dimension: 256,
        seed: 0,
    }
}

fn default_tst() -> EmbedderConfig {
    EmbedderConfig::Hashing {
        dimension: 256,
        seed: 1,
    }
}

/// The two prompt-similarity models few-shots can be selected with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderSet {
    #[serde(default = "default_pretrained")]
    pub pretrained: EmbedderConfig,
    /// An embedder tuned for program similarity.
    #[serde(default = "default_tst")]
    pub tst: EmbedderConfig,
}

impl Default for EmbedderSet {
    fn default() -> Self {
        Self {
            pretrained: default_pretrained(),
            tst: default_tst(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClientConfig {
    /// Canned responses keyed by prompt digest.
    Mock {
        #[serde(default)]
        fixtures: Option<PathBuf>,
        /// Overrides the fixture file's fallback.
        #[serde(default)]
        fallback: Option<Fallback>,
    },
    Http(HttpCompletionConfig),
    /// Precomputed outputs per sample id, e.g. from a fine-tuned model.
    /// No prompt is assembled.
    Predictions {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionModel {
    #[default]
    Pretrained,
    Tst,
}

impl SelectionModel {
    pub fn label(self) -> &'static str {
        match self {
            SelectionModel::Pretrained => "Pre-trained",
            SelectionModel::Tst => "TST",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub selection_model: SelectionModel,
    #[serde(default)]
    pub grounding: GroundingConfig,
    /// Overrides the batch client.
    #[serde(default)]
    pub client: Option<ClientConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroundingVariant {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "fd")]
    Fd,
    #[serde(rename = "sfd")]
    Sfd,
    #[serde(rename = "fd+sfd")]
    FdSfd,
}

impl GroundingVariant {
    pub const ALL: [GroundingVariant; 4] = [Self::None, Self::Fd, Self::Sfd, Self::FdSfd];

    fn flags(self) -> (bool, bool) {
        match self {
            Self::None => (false, false),
            Self::Fd => (true, false),
            Self::Sfd => (false, true),
            Self::FdSfd => (true, true),
        }
    }
}

fn default_models() -> Vec<SelectionModel> {
    vec![SelectionModel::Pretrained, SelectionModel::Tst]
}

fn default_shot_counts() -> Vec<usize> {
    vec![5, 20]
}

fn default_variants() -> Vec<GroundingVariant> {
    GroundingVariant::ALL.to_vec()
}

/// Cross product of selection models, few-shot counts and definition flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default = "default_models")]
    pub selection_models: Vec<SelectionModel>,
    #[serde(default = "default_shot_counts")]
    pub few_shot_counts: Vec<usize>,
    #[serde(default = "default_variants")]
    pub variants: Vec<GroundingVariant>,
    /// Settings shared by every cell; the count and flags are overwritten.
    #[serde(default)]
    pub base: GroundingConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            selection_models: default_models(),
            few_shot_counts: default_shot_counts(),
            variants: default_variants(),
            base: GroundingConfig::default(),
        }
    }
}

/// Row label in the style "TST + FD + SFD [k=20]".
pub fn grid_name(model: SelectionModel, include_fd: bool, include_sfd: bool, few_shots: usize) -> String {
    let mut name = model.label().to_string();
    if include_fd {
        name.push_str(" + FD");
    }
    if include_sfd {
        name.push_str(" + SFD");
    }
    format!("{name} [k={few_shots}]")
}

impl GridConfig {
    pub fn expand(&self) -> Vec<ExperimentSpec> {
        let mut specs = Vec::new();
        for &model in &self.selection_models {
            for &k in &self.few_shot_counts {
                for variant in &self.variants {
                    let (include_fd, include_sfd) = variant.flags();
                    specs.push(ExperimentSpec {
                        name: grid_name(model, include_fd, include_sfd, k),
                        selection_model: model,
                        grounding: GroundingConfig {
                            few_shot_count: k,
                            include_fd,
                            include_sfd,
                            ..self.base.clone()
                        },
                        client: None,
                    });
                }
            }
        }
        specs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPaths {
    /// Samples few-shots are retrieved from.
    pub pool: PathBuf,
    /// Samples to evaluate.
    pub test: PathBuf,
    pub catalog: PathBuf,
}

fn default_max_output_tokens() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSettings {
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: usize,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
    #[serde(default)]
    pub model: String,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            max_output_tokens: default_max_output_tokens(),
            temperature: 0.0,
            stop_sequences: Vec::new(),
            model: String::new(),
        }
    }
}

fn default_concurrency() -> usize {
    8
}

/// A batch of experiments over one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub dataset: DatasetPaths,
    #[serde(default)]
    pub embedders: EmbedderSet,
    pub client: ClientConfig,
    /// Experiment the deltas are computed against.
    #[serde(default)]
    pub baseline: Option<String>,
    /// Maximum completions in flight.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Keep full prompt text in run records, not only the digest.
    #[serde(default)]
    pub store_prompts: bool,
    #[serde(default)]
    pub generation: GenerationSettings,
    /// Text file with `{instructions}`, `{definitions}`, `{few_shots}` and
    /// `{query}` slots, replacing the built-in prompt layout.
    #[serde(default)]
    pub prompt_template: Option<PathBuf>,
    #[serde(default)]
    pub experiments: Vec<ExperimentSpec>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

fn resolve_client(base: &Path, client: &mut ClientConfig) {
    match client {
        ClientConfig::Mock { fixtures: Some(p), .. } => resolve(base, p),
        ClientConfig::Predictions { path } => resolve(base, path),
        _ => {}
    }
}

impl BatchConfig {
    /// Parses TOML when `toml` is set, JSON otherwise.
    pub fn parse(text: &str, toml: bool) -> Result<Self, HarnessError> {
        if toml {
            ::toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
        } else {
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
        }
    }

    /// Loads a `.toml` or JSON file; relative paths inside are taken
    /// relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let is_toml = path.extension().is_some_and(|e| e == "toml");
        let mut config = Self::parse(&text, is_toml)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new("")));
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.dataset.pool);
        resolve(base, &mut self.dataset.test);
        resolve(base, &mut self.dataset.catalog);
        if let Some(path) = &mut self.prompt_template {
            resolve(base, path);
        }
        resolve_client(base, &mut self.client);
        for spec in &mut self.experiments {
            if let Some(client) = &mut spec.client {
                resolve_client(base, client);
            }
        }
    }

    /// Listed experiments followed by the grid, checked for unique names,
    /// valid grounding and a known baseline.
    pub fn experiments(&self) -> Result<Vec<ExperimentSpec>, HarnessError> {
        let mut specs = self.experiments.clone();
        if let Some(grid) = &self.grid {
            specs.extend(grid.expand());
        }
        if specs.is_empty() {
            return Err(HarnessError::Config("no experiments configured".into()));
        }
        if self.concurrency == 0 {
            return Err(HarnessError::Config("concurrency must be positive".into()));
        }
        let mut names = HashSet::new();
        for spec in &specs {
            if !names.insert(spec.name.as_str()) {
                return Err(HarnessError::DuplicateExperiment(spec.name.clone()));
            }
            spec.grounding.validate()?;
        }
        if let Some(baseline) = &self.baseline {
            if !names.contains(baseline.as_str()) {
                return Err(HarnessError::MissingBaseline(baseline.clone()));
            }
        }
        Ok(specs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_grid_has_sixteen_cells() {
        let specs = GridConfig::default().expand();
        assert_eq!(specs.len(), 16);
        let names: HashSet<_> = specs.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names.len(), 16);
        assert!(names.contains("Pre-trained [k=5]"));
        assert!(names.contains("TST + FD + SFD [k=20]"));
        let cell = specs.iter().find(|s| s.name == "TST + SFD [k=20]").unwrap();
        assert_eq!(cell.selection_model, SelectionModel::Tst);
        assert_eq!(
            (
                cell.grounding.few_shot_count,
                cell.grounding.include_fd,
                cell.grounding.include_sfd
            ),
            (20, false, true)
        );
    }

    const JSON: &str = r#"{
        "dataset": {"pool": "pool.jsonl", "test": "/abs/test.jsonl", "catalog": "catalog.json"},
        "client": {"kind": "mock", "fixtures": "fixtures.json"},
        "prompt_template": "prompt.txt",
        "baseline": "base",
        "experiments": [
            {"name": "base", "client": {"kind": "predictions", "path": "preds.jsonl"}},
            {"name": "TST + FD", "selection_model": "tst", "grounding": {"include_fd": true}}
        ],
        "grid": {"selection_models": ["pretrained"], "few_shot_counts": [5], "variants": ["fd+sfd"]}
    }"#;

    #[test]
    fn json_config_with_grid() {
        let mut config = BatchConfig::parse(JSON, false).unwrap();
        config.resolve_paths(Path::new("/data"));
        assert_eq!(config.dataset.pool, PathBuf::from("/data/pool.jsonl"));
        assert_eq!(config.dataset.test, PathBuf::from("/abs/test.jsonl"));
        assert_eq!(config.prompt_template, Some(PathBuf::from("/data/prompt.txt")));
        assert_eq!(config.concurrency, 8);
        assert_eq!(config.embedders, EmbedderSet::default());
        let specs = config.experiments().unwrap();
        let names: Vec<_> = specs.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["base", "TST + FD", "Pre-trained + FD + SFD [k=5]"]);
        assert_eq!(
            specs[0].client,
            Some(ClientConfig::Predictions {
                path: "/data/preds.jsonl".into()
            })
        );
        assert!(specs[1].grounding.include_fd);
        assert_eq!(specs[1].grounding.few_shot_count, 5);
    }

    #[test]
    fn toml_config() {
        let text = r#"
            baseline = "a"
            concurrency = 2
            [dataset]
            pool = "p.jsonl"
            test = "t.jsonl"
            catalog = "c.json"
            [client]
            kind = "mock"
            fallback = "refuse"
            [embedders.tst]
            kind = "hashing"
            dimension = 64
            seed = 9
            [[experiments]]
            name = "a"
        "#;
        let config = BatchConfig::parse(text, true).unwrap();
        assert_eq!(config.embedders.tst, EmbedderConfig::Hashing { dimension: 64, seed: 9 });
        assert_eq!(
            config.client,
            ClientConfig::Mock {
                fixtures: None,
                fallback: Some(Fallback::Refuse)
            }
        );
        assert_eq!(config.experiments().unwrap().len(), 1);
    }

    #[test]
    fn config_errors() {
        let mut config = BatchConfig::parse(JSON, false).unwrap();
        config.baseline = Some("nope".into());
        assert!(matches!(config.experiments(), Err(HarnessError::MissingBaseline(_))));
        config.baseline = None;
        config.experiments.push(config.experiments[0].clone());
        assert!(matches!(
            config.experiments(),
            Err(HarnessError::DuplicateExperiment(_))
        ));
        config.experiments.clear();
        config.grid = None;
        assert!(matches!(config.experiments(), Err(HarnessError::Config(_))));
    }
}
