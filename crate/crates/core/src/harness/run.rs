use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BatchConfig, ClientConfig, ExperimentSpec, GenerationSettings, SelectionModel};
use super::HarnessError;
use crate::catalog::{load_catalog_file, ApiCatalog};
use crate::dataset::{load_dataset, load_predictions, Sample};
use crate::generation::{
    extract_dsl, prompt_digest, CompletionClient, CompletionRequest, FinishReason, HttpCompletionClient, MockClient,
    MockFixtures,
};
use crate::grounding::{build_sfd_index, retrieve_sfds, Metaprompt, MetapromptBuilder, PromptTemplate};
use crate::metrics::{aggregate, score_sample, EvaluationOutcome, MetricsReport};
use crate::retrieval::{build_index, retrieve_few_shots, Embedder, SampleIndex};

/// Loaded data, embedders and indexes shared by the experiments of a batch.
pub struct RunContext {
    pub pool: Vec<Sample>,
    pub test: Vec<Sample>,
    pub catalog: ApiCatalog,
    pretrained: Box<dyn Embedder>,
    tst: Box<dyn Embedder>,
    pool_positions: HashMap<String, usize>,
    few_shot_indexes: HashMap<SelectionModel, SampleIndex>,
    sfd_index: Option<SampleIndex>,
    template: PromptTemplate,
}

impl RunContext {
    pub fn new(
        pool: Vec<Sample>,
        test: Vec<Sample>,
        catalog: ApiCatalog,
        pretrained: Box<dyn Embedder>,
        tst: Box<dyn Embedder>,
    ) -> Self {
        let pool_positions = pool.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        Self {
            pool,
            test,
            catalog,
            pretrained,
            tst,
            pool_positions,
            few_shot_indexes: HashMap::new(),
            sfd_index: None,
            template: PromptTemplate::default(),
        }
    }

    pub fn embedder(&self, model: SelectionModel) -> &dyn Embedder {
        match model {
            SelectionModel::Pretrained => self.pretrained.as_ref(),
            SelectionModel::Tst => self.tst.as_ref(),
        }
    }

    /// Uses a prebuilt few-shot index; it must come from the model's embedder
    /// and only hold pool ids.
    pub fn set_index(&mut self, model: SelectionModel, index: SampleIndex) -> Result<(), HarnessError> {
        index.check_embedder(self.embedder(model))?;
        if let Some(id) = index.ids().iter().find(|id| !self.pool_positions.contains_key(*id)) {
            return Err(HarnessError::Config(format!("index entry `{id}` is not in the pool")));
        }
        self.few_shot_indexes.insert(model, index);
        Ok(())
    }

    pub fn set_template(&mut self, template: PromptTemplate) {
        self.template = template;
    }

    /// Builds whatever indexes `spec` needs and are not there yet.
    pub fn prepare(&mut self, spec: &ExperimentSpec) -> Result<(), HarnessError> {
        let model = spec.selection_model;
        if spec.grounding.few_shot_count > 0 && !self.few_shot_indexes.contains_key(&model) {
            let index = build_index(&self.pool, self.embedder(model))?;
            self.few_shot_indexes.insert(model, index);
        }
        if spec.grounding.include_sfd && self.sfd_index.is_none() {
            self.sfd_index = Some(build_sfd_index(&self.catalog, self.pretrained.as_ref())?);
        }
        Ok(())
    }

    fn check_prepared(&self, spec: &ExperimentSpec) -> Result<(), HarnessError> {
        if spec.grounding.few_shot_count > 0 && !self.few_shot_indexes.contains_key(&spec.selection_model) {
            return Err(HarnessError::Config(format!(
                "no {} index for experiment `{}`",
                spec.selection_model.label(),
                spec.name
            )));
        }
        if spec.grounding.include_sfd && self.sfd_index.is_none() {
            return Err(HarnessError::Config(format!(
                "no definition index for experiment `{}`",
                spec.name
            )));
        }
        Ok(())
    }

    /// Retrieves examples and definitions for one sample and assembles its
    /// prompt. The sample itself is never its own example.
    pub fn metaprompt(&self, spec: &ExperimentSpec, sample: &Sample) -> Result<Metaprompt, String> {
        let grounding = &spec.grounding;
        let k = grounding.few_shot_count;
        let mut few_shots = Vec::with_capacity(k);
        if k > 0 {
            let index = &self.few_shot_indexes[&spec.selection_model];
            let hits = retrieve_few_shots(index, &sample.prompt, k + 1, self.embedder(spec.selection_model))
                .map_err(|e| e.to_string())?;
            for hit in hits.into_iter().filter(|h| h.id != sample.id).take(k) {
                let position = self
                    .pool_positions
                    .get(&hit.id)
                    .ok_or_else(|| format!("retrieved unknown sample `{}`", hit.id))?;
                few_shots.push(&self.pool[*position]);
            }
        }
        let sfds = match &self.sfd_index {
            Some(index) if grounding.include_sfd => retrieve_sfds(
                index,
                &self.catalog,
                &sample.prompt,
                grounding.sfd_count,
                self.pretrained.as_ref(),
            )
            .map_err(|e| e.to_string())?,
            _ => Vec::new(),
        };
        MetapromptBuilder::new(grounding)
            .with_template(self.template.clone())
            .assemble(&sample.prompt, &few_shots, &sfds, &self.catalog)
            .map_err(|e| e.to_string())
    }
}

/// Where completions come from.
#[derive(Clone, Copy)]
pub enum Responder<'a> {
    Client(&'a dyn CompletionClient),
    /// Fixed outputs per sample id; no prompt is built.
    Predictions(&'a BTreeMap<String, String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub concurrency: usize,
    pub store_prompts: bool,
    pub generation: GenerationSettings,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            concurrency: 8,
            store_prompts: false,
            generation: GenerationSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default)]
    pub few_shot_ids: Vec<String>,
    #[serde(default)]
    pub definition_names: Vec<String>,
    pub completion: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<FinishReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub outcome: EvaluationOutcome,
    #[serde(skip)]
    pub latency_ms: u64,
}

/// One experiment's results. Timing fields are not serialized, so saved
/// records from repeated runs compare equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    /// None when outputs did not depend on retrieved examples.
    #[serde(default)]
    pub few_shots: Option<usize>,
    pub samples: Vec<SampleRecord>,
    pub report: MetricsReport,
    #[serde(skip)]
    pub elapsed_ms: u64,
}

fn evaluate(
    spec: &ExperimentSpec,
    ctx: &RunContext,
    responder: Responder<'_>,
    settings: &RunSettings,
    sample: &Sample,
) -> SampleRecord {
    let started = Instant::now();
    let mut record = SampleRecord {
        id: sample.id.clone(),
        prompt_digest: None,
        prompt: None,
        few_shot_ids: Vec::new(),
        definition_names: Vec::new(),
        completion: String::new(),
        finish_reason: None,
        error: None,
        outcome: EvaluationOutcome::unparsed(&sample.id),
        latency_ms: 0,
    };
    let text = match responder {
        Responder::Predictions(predictions) => match predictions.get(&sample.id) {
            Some(text) => Some(text.clone()),
            None => {
                record.error = Some("no prediction for sample".into());
                None
            }
        },
        Responder::Client(client) => match ctx.metaprompt(spec, sample) {
            Err(e) => {
                record.error = Some(e);
                None
            }
            Ok(prompt) => {
                record.prompt_digest = Some(prompt_digest(&prompt.rendered));
                record.few_shot_ids = prompt.few_shot_blocks.iter().map(|b| b.sample_id.clone()).collect();
                record.definition_names = prompt.definition_names.clone();
                let g = &settings.generation;
                let request = CompletionRequest {
                    prompt: prompt.rendered,
                    max_output_tokens: g.max_output_tokens,
                    temperature: g.temperature,
                    stop_sequences: g.stop_sequences.clone(),
                    model_name: g.model.clone(),
                };
                let result = client.complete(&request);
                if settings.store_prompts {
                    record.prompt = Some(request.prompt);
                }
                record.finish_reason = Some(result.finish_reason);
                record.error = result.error;
                match result.finish_reason {
                    FinishReason::Completed | FinishReason::Truncated => Some(result.text),
                    FinishReason::Refused | FinishReason::TransportError => None,
                }
            }
        },
    };
    if let Some(text) = text {
        record.outcome = score_sample(&sample.id, &extract_dsl(&text), &sample.flow, Some(&ctx.catalog));
        record.completion = text;
    }
    record.latency_ms = started.elapsed().as_millis().try_into().unwrap_or(u64::MAX);
    record
}

/// Runs one experiment over the context's test samples.
///
/// Samples run concurrently up to `settings.concurrency`; a failure in one
/// sample only makes that sample unparsed. Records are sorted by id.
pub fn run_experiment(
    spec: &ExperimentSpec,
    ctx: &RunContext,
    responder: Responder<'_>,
    settings: &RunSettings,
) -> Result<RunRecord, HarnessError> {
    spec.grounding.validate()?;
    if matches!(responder, Responder::Client(_)) {
        ctx.check_prepared(spec)?;
    }
    if settings.concurrency == 0 {
        return Err(HarnessError::Config("concurrency must be positive".into()));
    }
    let started = Instant::now();
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.concurrency)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut samples: Vec<SampleRecord> = threads.install(|| {
        ctx.test
            .par_iter()
            .map(|sample| evaluate(spec, ctx, responder, settings, sample))
            .collect()
    });
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    let outcomes: Vec<EvaluationOutcome> = samples.iter().map(|s| s.outcome.clone()).collect();
    let report = aggregate(&outcomes)?;
    Ok(RunRecord {
        experiment: spec.name.clone(),
        few_shots: match responder {
            Responder::Client(_) => Some(spec.grounding.few_shot_count),
            Responder::Predictions(_) => None,
        },
        samples,
        report,
        elapsed_ms: started.elapsed().as_millis().try_into().unwrap_or(u64::MAX),
    })
}

/// Loads the batch's datasets and catalog and builds its embedders.
pub fn load_context(config: &BatchConfig) -> Result<RunContext, HarnessError> {
    let pool = load_dataset(&config.dataset.pool)?;
    let test = load_dataset(&config.dataset.test)?;
    let catalog = load_catalog_file(&config.dataset.catalog)?;
    let mut ctx = RunContext::new(
        pool,
        test,
        catalog,
        config.embedders.pretrained.build()?,
        config.embedders.tst.build()?,
    );
    if let Some(path) = &config.prompt_template {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        ctx.set_template(PromptTemplate::new(text)?);
    }
    Ok(ctx)
}

enum LoadedClient {
    Client(Box<dyn CompletionClient>),
    Predictions(BTreeMap<String, String>),
}

impl LoadedClient {
    fn load(config: &ClientConfig) -> Result<Self, HarnessError> {
        Ok(match config {
            ClientConfig::Mock { fixtures, fallback } => {
                let mut mock_fixtures = match fixtures {
                    Some(path) => MockClient::load(path)?.fixtures().clone(),
                    None => MockFixtures::default(),
                };
                if let Some(fallback) = fallback {
                    mock_fixtures.fallback = fallback.clone();
                }
                LoadedClient::Client(Box::new(MockClient::new(mock_fixtures)))
            }
            ClientConfig::Http(http) => LoadedClient::Client(Box::new(HttpCompletionClient::new(http.clone())?)),
            ClientConfig::Predictions { path } => LoadedClient::Predictions(load_predictions(path)?),
        })
    }

    fn responder(&self) -> Responder<'_> {
        match self {
            LoadedClient::Client(c) => Responder::Client(c.as_ref()),
            LoadedClient::Predictions(p) => Responder::Predictions(p),
        }
    }
}

impl BatchConfig {
    pub fn settings(&self) -> RunSettings {
        RunSettings {
            concurrency: self.concurrency,
            store_prompts: self.store_prompts,
            generation: self.generation.clone(),
        }
    }

    fn client_for<'a>(&'a self, spec: &'a ExperimentSpec) -> &'a ClientConfig {
        spec.client.as_ref().unwrap_or(&self.client)
    }
}

/// Runs every experiment of a batch in order.
pub fn run_batch(config: &BatchConfig, ctx: &mut RunContext) -> Result<Vec<RunRecord>, HarnessError> {
    let specs = config.experiments()?;
    let settings = config.settings();
    let mut records = Vec::with_capacity(specs.len());
    for spec in &specs {
        let client_config = config.client_for(spec);
        if !matches!(client_config, ClientConfig::Predictions { .. }) {
            ctx.prepare(spec)?;
        }
        let client = LoadedClient::load(client_config)?;
        records.push(run_experiment(spec, ctx, client.responder(), &settings)?);
    }
    Ok(records)
}

/// Mock fixtures mapping each prompt a batch would send to the response
/// listed for that sample id. Experiments that do not use the mock client
/// are skipped, as are samples without a response.
pub fn record_fixtures(
    config: &BatchConfig,
    ctx: &mut RunContext,
    responses: &BTreeMap<String, String>,
) -> Result<MockFixtures, HarnessError> {
    let mut fixtures = MockFixtures::default();
    for spec in config.experiments()? {
        if !matches!(config.client_for(&spec), ClientConfig::Mock { .. }) {
            continue;
        }
        ctx.prepare(&spec)?;
        for sample in &ctx.test {
            let Some(response) = responses.get(&sample.id) else {
                continue;
            };
            let prompt = ctx
                .metaprompt(&spec, sample)
                .map_err(|e| HarnessError::Config(format!("{}: {}: {e}", spec.name, sample.id)))?;
            let digest = prompt_digest(&prompt.rendered);
            match fixtures.responses.get(&digest) {
                Some(Some(existing)) if existing != response => {
                    return Err(HarnessError::FixtureConflict(sample.id.clone()));
                }
                _ => {
                    fixtures.responses.insert(digest, Some(response.clone()));
                }
            }
        }
    }
    Ok(fixtures)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::load_catalog;
    use crate::grounding::GroundingConfig;
    use crate::retrieval::HashingEmbedder;
    use crate::test_fixtures::SEND_EMAIL_ENTRY;

    fn samples() -> Vec<Sample> {
        (0..6)
            .map(|i| {
                Sample::new(
                    format!("s{i}"),
                    format!("send email number {i}"),
                    format!("x = shared_outlook.SendEmailV2({{\"emailMessage/To\": \"u{i}@x.com\"}});"),
                )
                .unwrap()
            })
            .collect()
    }

    fn context() -> RunContext {
        let s = samples();
        RunContext::new(
            s.clone(),
            s,
            load_catalog(SEND_EMAIL_ENTRY).unwrap(),
            Box::new(HashingEmbedder::new(64, 0)),
            Box::new(HashingEmbedder::new(64, 1)),
        )
    }

    fn spec(k: usize) -> ExperimentSpec {
        ExperimentSpec {
            name: "e".into(),
            selection_model: SelectionModel::Pretrained,
            grounding: GroundingConfig {
                few_shot_count: k,
                include_fd: true,
                ..GroundingConfig::default()
            },
            client: None,
        }
    }

    #[test]
    fn never_retrieves_itself() {
        let mut ctx = context();
        let spec = spec(5);
        ctx.prepare(&spec).unwrap();
        for sample in &ctx.test {
            let mp = ctx.metaprompt(&spec, sample).unwrap();
            assert_eq!(mp.few_shot_blocks.len(), 5);
            assert!(mp.few_shot_blocks.iter().all(|b| b.sample_id != sample.id));
            assert_eq!(mp.definition_names, ["shared_outlook.SendEmailV2"]);
        }
    }

    #[test]
    fn custom_template_is_used() {
        let mut ctx = context();
        let spec = spec(1);
        ctx.prepare(&spec).unwrap();
        ctx.set_template(PromptTemplate::new("{instructions}|{definitions}|{few_shots}|ASK {query}").unwrap());
        let mp = ctx.metaprompt(&spec, &ctx.test[0]).unwrap();
        assert!(mp.rendered.ends_with("|ASK send email number 0"), "{}", mp.rendered);
        assert!(!mp.rendered.contains("### Task"));
    }

    #[test]
    fn unprepared_context_is_a_config_error() {
        let ctx = context();
        let mock = MockClient::refusing();
        assert!(matches!(
            run_experiment(&spec(2), &ctx, Responder::Client(&mock), &RunSettings::default()),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn constant_hallucination_and_refusals() {
        let mut ctx = context();
        let spec = spec(2);
        ctx.prepare(&spec).unwrap();
        let settings = RunSettings::default();
        let fake = MockClient::constant("x = shared_fake.DoesNotExist({});");
        let record = run_experiment(&spec, &ctx, Responder::Client(&fake), &settings).unwrap();
        assert_eq!(record.report.made_up_api_pct, 100.0);
        assert_eq!(record.report.average_similarity, 0.0);

        let refusing = MockClient::refusing();
        let record = run_experiment(&spec, &ctx, Responder::Client(&refusing), &settings).unwrap();
        assert_eq!(record.report.unparsed_pct, 100.0);
        assert!(record
            .samples
            .iter()
            .all(|s| s.finish_reason == Some(FinishReason::Refused)));
    }

    #[test]
    fn predictions_half_gold_half_garbage() {
        let ctx = context();
        let predictions: BTreeMap<String, String> = ctx
            .test
            .iter()
            .enumerate()
            .map(|(i, s)| {
                (
                    s.id.clone(),
                    if i % 2 == 0 {
                        s.flow_text.clone()
                    } else {
                        "%% !!".into()
                    },
                )
            })
            .collect();
        let record = run_experiment(
            &spec(5),
            &ctx,
            Responder::Predictions(&predictions),
            &RunSettings::default(),
        )
        .unwrap();
        assert_eq!(record.report.unparsed_pct, 50.0);
        assert_eq!(record.report.average_similarity, 0.5);
        assert_eq!(record.few_shots, None);
    }

    #[test]
    fn missing_prediction_isolated() {
        let ctx = context();
        let mut predictions: BTreeMap<String, String> =
            ctx.test.iter().map(|s| (s.id.clone(), s.flow_text.clone())).collect();
        predictions.remove("s3");
        let record = run_experiment(
            &spec(0),
            &ctx,
            Responder::Predictions(&predictions),
            &RunSettings::default(),
        )
        .unwrap();
        assert_eq!(record.report.counts.unparsed, 1);
        let failed: Vec<_> = record
            .samples
            .iter()
            .filter(|s| s.error.is_some())
            .map(|s| s.id.as_str())
            .collect();
        assert_eq!(failed, ["s3"]);
    }

    #[test]
    fn records_sorted_and_stable_across_concurrency() {
        let mut ctx = context();
        let spec = spec(3);
        ctx.prepare(&spec).unwrap();
        let echo = MockClient::constant("x = shared_outlook.SendEmailV2({});");
        let one = run_experiment(
            &spec,
            &ctx,
            Responder::Client(&echo),
            &RunSettings {
                concurrency: 1,
                ..RunSettings::default()
            },
        )
        .unwrap();
        let many = run_experiment(
            &spec,
            &ctx,
            Responder::Client(&echo),
            &RunSettings {
                concurrency: 4,
                ..RunSettings::default()
            },
        )
        .unwrap();
        assert_eq!(
            serde_json::to_string(&one).unwrap(),
            serde_json::to_string(&many).unwrap()
        );
        let ids: Vec<_> = one.samples.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["s0", "s1", "s2", "s3", "s4", "s5"]);
    }
}
