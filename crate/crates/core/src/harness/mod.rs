//! Dataset splitting, experiment orchestration and report emission.

mod config;
mod report;
mod run;
mod split;

pub use config::{
    grid_name, BatchConfig, ClientConfig, DatasetPaths, EmbedderConfig, EmbedderSet, ExperimentSpec,
    GenerationSettings, GridConfig, GroundingVariant, SelectionModel,
};
pub use report::{emit_reports, load_runs, write_outputs, DeltaRow, ExperimentRow, ReportFile, Reports};
pub use run::{
    load_context, record_fixtures, run_batch, run_experiment, Responder, RunContext, RunRecord, RunSettings,
    SampleRecord,
};
pub use split::{make_ood_split, DatasetSplit, InDomainSize, SplitConfig};

use crate::catalog::CatalogError;
use crate::dataset::DatasetError;
use crate::generation::GenerationError;
use crate::grounding::GroundingError;
use crate::metrics::MetricsError;
use crate::retrieval::RetrievalError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("failed to access {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("baseline `{0}` is not among the experiments")]
    MissingBaseline(String),
    #[error("experiment name `{0}` is used twice")]
    DuplicateExperiment(String),
    #[error("sample `{0}` maps to an already recorded prompt with a different response")]
    FixtureConflict(String),
}
