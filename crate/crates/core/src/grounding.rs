//! Metaprompt assembly: instructions, function definitions, retrieved
//! examples and the user query, fitted to a token budget.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::catalog::{render_function_definition, ApiCatalog, FunctionDefinition};
use crate::dataset::Sample;
use crate::dsl::{extract_api_sequence, serialize_flow};
use crate::retrieval::{Embedder, RetrievalError, SampleIndex};

pub const DEFAULT_INSTRUCTIONS: &str = "You write workflow automation flows in a JavaScript-like DSL. \
Each statement assigns the result of one API call: `name = [await] namespace.Function({\"Key\": value});`. \
Conditionals use `if (condition) { ... } else { ... }`. \
Only call functions that appear in the definitions or examples below, and only pass their documented parameter keys. \
Reply with the DSL only.";

pub const DEFAULT_TEMPLATE: &str = "{instructions}\n\n{definitions}{few_shots}### Task\n\nQuery: {query}\nDSL:\n";

const SLOTS: [&str; 4] = ["instructions", "definitions", "few_shots", "query"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GroundingError {
    #[error("token budget {budget} cannot hold instructions and query ({needed} tokens)")]
    BudgetTooSmall { needed: usize, budget: usize },
    #[error("token budget must be positive")]
    ZeroBudget,
    #[error("prompt template is missing the {{{0}}} slot")]
    MissingSlot(&'static str),
}

fn default_few_shot_count() -> usize {
    5
}

fn default_sfd_count() -> usize {
    5
}

fn default_token_budget() -> usize {
    14_000
}

fn default_instructions() -> String {
    DEFAULT_INSTRUCTIONS.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingConfig {
    #[serde(default = "default_few_shot_count")]
    pub few_shot_count: usize,
    #[serde(default)]
    pub include_fd: bool,
    #[serde(default)]
    pub include_sfd: bool,
    #[serde(default = "default_sfd_count")]
    pub sfd_count: usize,
    #[serde(default = "default_token_budget")]
    pub token_budget: usize,
    #[serde(default = "default_instructions")]
    pub system_instructions: String,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        Self {
            few_shot_count: default_few_shot_count(),
            include_fd: false,
            include_sfd: false,
            sfd_count: default_sfd_count(),
            token_budget: default_token_budget(),
            system_instructions: default_instructions(),
        }
    }
}

impl GroundingConfig {
    pub fn validate(&self) -> Result<(), GroundingError> {
        if self.token_budget == 0 {
            return Err(GroundingError::ZeroBudget);
        }
        Ok(())
    }
}

/// Approximate token counting.
pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> usize;
}

/// `ceil(chars / n)`.
#[derive(Debug, Clone, Copy)]
pub struct CharsPerToken(pub usize);

impl Default for CharsPerToken {
    fn default() -> Self {
        Self(4)
    }
}

impl TokenEstimator for CharsPerToken {
    fn estimate(&self, text: &str) -> usize {
        text.chars().count().div_ceil(self.0.max(1))
    }
}

/// Text template with `{instructions}`, `{definitions}`, `{few_shots}` and
/// `{query}` slots. Other braces are copied through.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            text: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, GroundingError> {
        let text = text.into();
        for slot in SLOTS {
            if !text.contains(&format!("{{{slot}}}")) {
                return Err(GroundingError::MissingSlot(slot));
            }
        }
        Ok(Self { text })
    }

    /// Single pass, so slot text inside substituted values is left alone.
    fn render(&self, values: [&str; 4]) -> String {
        let mut out = String::with_capacity(self.text.len() + values.iter().map(|v| v.len()).sum::<usize>());
        let mut rest = self.text.as_str();
        'scan: while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let tail = &rest[open..];
            for (slot, value) in SLOTS.iter().zip(values) {
                let marker_len = slot.len() + 2;
                if tail.len() >= marker_len
                    && tail.as_bytes()[marker_len - 1] == b'}'
                    && &tail[1..marker_len - 1] == *slot
                {
                    out.push_str(value);
                    rest = &tail[marker_len..];
                    continue 'scan;
                }
            }
            out.push('{');
            rest = &tail[1..];
        }
        out.push_str(rest);
        out
    }
}

/// Definitions for the functions used by a set of example flows.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularFds<'a> {
    /// Deduplicated, in order of first appearance across the flows.
    pub definitions: Vec<&'a FunctionDefinition>,
    /// Names used by the flows that the catalog does not know.
    pub missing: Vec<String>,
}

pub fn collect_regular_fds<'a>(few_shots: &[&Sample], catalog: &'a ApiCatalog) -> RegularFds<'a> {
    let mut seen = HashSet::new();
    let mut fds = RegularFds {
        definitions: Vec::new(),
        missing: Vec::new(),
    };
    for sample in few_shots {
        for name in extract_api_sequence(&sample.flow) {
            if !seen.insert(name.clone()) {
                continue;
            }
            match catalog.get(&name) {
                Some(def) => fds.definitions.push(def),
                None => fds.missing.push(name),
            }
        }
    }
    fds
}

/// Text embedded for a definition in the semantic index: display name,
/// description and parameter summaries.
pub fn sfd_text(def: &FunctionDefinition) -> String {
    let mut parts: Vec<&str> = vec![&def.display_name, &def.description];
    parts.extend(def.parameters.iter().map(|p| p.summary.as_str()));
    let text = parts
        .into_iter()
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    if text.is_empty() {
        def.function_name.clone()
    } else {
        text
    }
}

/// Semantic index over catalog definitions, keyed by qualified name.
pub fn build_sfd_index(catalog: &ApiCatalog, embedder: &dyn Embedder) -> Result<SampleIndex, RetrievalError> {
    SampleIndex::build(
        catalog.iter().map(|def| (def.function_name.as_str(), sfd_text(def))),
        embedder,
    )
}

/// Top `n` definitions for the query by cosine over the semantic index.
pub fn retrieve_sfds<'a>(
    index: &SampleIndex,
    catalog: &'a ApiCatalog,
    query: &str,
    n: usize,
    embedder: &dyn Embedder,
) -> Result<Vec<&'a FunctionDefinition>, RetrievalError> {
    if n == 0 || index.is_empty() {
        return Ok(Vec::new());
    }
    index.check_embedder(embedder)?;
    let hits = index.search(&embedder.embed(query)?, n)?;
    Ok(hits.iter().filter_map(|h| catalog.get(&h.id)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FewShotBlock {
    pub sample_id: String,
    pub prompt: String,
    pub flow_text: String,
}

impl FewShotBlock {
    fn render(&self) -> String {
        format!("Query: {}\nDSL:\n{}", self.prompt, self.flow_text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metaprompt {
    pub system_instructions: String,
    /// Qualified names matching `function_definition_blocks`.
    pub definition_names: Vec<String>,
    pub function_definition_blocks: Vec<String>,
    pub few_shot_blocks: Vec<FewShotBlock>,
    pub user_query: String,
    pub rendered: String,
    pub token_estimate: usize,
    /// Functions in retained examples that have no catalog entry.
    pub missing_definitions: Vec<String>,
    pub dropped_sfds: usize,
    pub dropped_few_shots: usize,
}

/// Assembles prompts under one configuration.
pub struct MetapromptBuilder<'c> {
    pub config: &'c GroundingConfig,
    pub template: PromptTemplate,
    pub estimator: Box<dyn TokenEstimator>,
}

impl<'c> MetapromptBuilder<'c> {
    pub fn new(config: &'c GroundingConfig) -> Self {
        Self {
            config,
            template: PromptTemplate::default(),
            estimator: Box::new(CharsPerToken::default()),
        }
    }

    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.template = template;
        self
    }

    pub fn with_estimator(mut self, estimator: impl TokenEstimator + 'static) -> Self {
        self.estimator = Box::new(estimator);
        self
    }

    /// `few_shots` and `sfds` are ranked best first. When over budget, the
    /// lowest-ranked semantic definitions go first, then the lowest-ranked
    /// examples together with definitions only they needed.
    pub fn assemble(
        &self,
        query: &str,
        few_shots: &[&Sample],
        sfds: &[&FunctionDefinition],
        catalog: &ApiCatalog,
    ) -> Result<Metaprompt, GroundingError> {
        let config = self.config;
        config.validate()?;
        let mut shots: Vec<&Sample> = few_shots.iter().copied().take(config.few_shot_count).collect();
        let mut semantic: Vec<&FunctionDefinition> = if config.include_sfd {
            sfds.iter().copied().take(config.sfd_count).collect()
        } else {
            Vec::new()
        };
        let (initial_shots, initial_sfds) = (shots.len(), semantic.len());
        loop {
            let mut prompt = self.render(query, &shots, &semantic, catalog);
            if prompt.token_estimate <= config.token_budget {
                prompt.dropped_sfds = initial_sfds - semantic.len();
                prompt.dropped_few_shots = initial_shots - shots.len();
                return Ok(prompt);
            }
            if semantic.pop().is_some() || shots.pop().is_some() {
                continue;
            }
            return Err(GroundingError::BudgetTooSmall {
                needed: prompt.token_estimate,
                budget: config.token_budget,
            });
        }
    }

    fn render(
        &self,
        query: &str,
        shots: &[&Sample],
        semantic: &[&FunctionDefinition],
        catalog: &ApiCatalog,
    ) -> Metaprompt {
        let mut definitions: Vec<&FunctionDefinition> = Vec::new();
        let mut missing_definitions = Vec::new();
        if self.config.include_fd {
            let fds = collect_regular_fds(shots, catalog);
            definitions = fds.definitions;
            missing_definitions = fds.missing;
        }
        for def in semantic {
            if !definitions.iter().any(|d| d.function_name == def.function_name) {
                definitions.push(def);
            }
        }
        let definition_names: Vec<String> = definitions.iter().map(|d| d.function_name.clone()).collect();
        let function_definition_blocks: Vec<String> =
            definitions.iter().map(|d| render_function_definition(d)).collect();
        let few_shot_blocks: Vec<FewShotBlock> = shots
            .iter()
            .map(|s| FewShotBlock {
                sample_id: s.id.clone(),
                prompt: s.prompt.clone(),
                flow_text: serialize_flow(&s.flow),
            })
            .collect();

        let definitions_section = if function_definition_blocks.is_empty() {
            String::new()
        } else {
            format!(
                "### Function definitions\n\n{}\n\n",
                function_definition_blocks.join("\n\n")
            )
        };
        let examples_section = if few_shot_blocks.is_empty() {
            String::new()
        } else {
            let blocks: Vec<String> = few_shot_blocks.iter().map(FewShotBlock::render).collect();
            format!("### Examples\n\n{}\n\n", blocks.join("\n---\n"))
        };
        let instructions = self.config.system_instructions.trim();
        let rendered = self
            .template
            .render([instructions, &definitions_section, &examples_section, query.trim()]);
        Metaprompt {
            system_instructions: instructions.to_string(),
            definition_names,
            function_definition_blocks,
            few_shot_blocks,
            user_query: query.trim().to_string(),
            token_estimate: self.estimator.estimate(&rendered),
            rendered,
            missing_definitions,
            dropped_sfds: 0,
            dropped_few_shots: 0,
        }
    }
}

/// Assembles with the default template and character-based token estimate.
pub fn assemble_metaprompt(
    query: &str,
    few_shots: &[&Sample],
    sfds: &[&FunctionDefinition],
    catalog: &ApiCatalog,
    config: &GroundingConfig,
) -> Result<Metaprompt, GroundingError> {
    MetapromptBuilder::new(config).assemble(query, few_shots, sfds, catalog)
}
