//! Completion clients and extraction of DSL text from model output.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::http::{token_from_env, JsonEndpoint, PostError, RetryPolicy};

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("completion client configuration: {0}")]
    Config(String),
    #[error("fixture file {path}: {message}")]
    Fixtures { path: String, message: String },
}

fn default_max_output_tokens() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: usize,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
    #[serde(default)]
    pub model_name: String,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_output_tokens: default_max_output_tokens(),
            temperature: 0.0,
            stop_sequences: Vec::new(),
            model_name: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Completed,
    Truncated,
    Refused,
    TransportError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
    /// Set for transport errors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CompletionResult {
    fn failed(message: impl Into<String>, started: Instant) -> Self {
        Self {
            text: String::new(),
            finish_reason: FinishReason::TransportError,
            latency_ms: elapsed_ms(started),
            error: Some(message.into()),
        }
    }

    fn refused(started: Instant) -> Self {
        Self {
            text: String::new(),
            finish_reason: FinishReason::Refused,
            latency_ms: elapsed_ms(started),
            error: None,
        }
    }
}

fn elapsed_ms(started: Instant) -> u64 {
    started.elapsed().as_millis().try_into().unwrap_or(u64::MAX)
}

/// A language model behind some transport. Failures are reported through
/// [`FinishReason`], never by panicking.
pub trait CompletionClient: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, request: &CompletionRequest) -> CompletionResult;
}

/// Lowercase hex SHA-256 of the prompt; the key for mock fixtures.
pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// What a [`MockClient`] does with a prompt it has no fixture for.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    #[default]
    TransportError,
    Refuse,
    Respond(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockFixtures {
    /// Prompt digest to response text; `null` means the model refuses.
    pub responses: BTreeMap<String, Option<String>>,
    #[serde(default)]
    pub fallback: Fallback,
}

/// Either a full [`MockFixtures`] object or just its digest-to-response map.
#[derive(Deserialize)]
#[serde(untagged)]
enum FixtureFile {
    Full(MockFixtures),
    Bare(BTreeMap<String, Option<String>>),
}

/// Replays canned responses, keyed by [`prompt_digest`].
#[derive(Debug, Clone, Default)]
pub struct MockClient {
    fixtures: MockFixtures,
}

impl MockClient {
    pub fn new(fixtures: MockFixtures) -> Self {
        Self { fixtures }
    }

    /// Refuses every prompt.
    pub fn refusing() -> Self {
        Self::new(MockFixtures {
            responses: BTreeMap::new(),
            fallback: Fallback::Refuse,
        })
    }

    /// Gives the same answer to every prompt.
    pub fn constant(text: impl Into<String>) -> Self {
        Self::new(MockFixtures {
            responses: BTreeMap::new(),
            fallback: Fallback::Respond(text.into()),
        })
    }

    pub fn insert(&mut self, prompt: &str, response: Option<String>) {
        self.fixtures.responses.insert(prompt_digest(prompt), response);
    }

    pub fn fixtures(&self) -> &MockFixtures {
        &self.fixtures
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GenerationError> {
        let path = path.as_ref();
        let fail = |message: String| GenerationError::Fixtures {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
        let fixtures = match serde_json::from_str(&text).map_err(|e| fail(e.to_string()))? {
            FixtureFile::Full(fixtures) => fixtures,
            FixtureFile::Bare(responses) => MockFixtures {
                responses,
                fallback: Fallback::default(),
            },
        };
        Ok(Self::new(fixtures))
    }
}

/// Cuts at the first stop sequence, then at the output budget
/// (`max_output_tokens * 4` characters).
fn shape_output(text: &str, request: &CompletionRequest) -> (String, FinishReason) {
    let mut text = text;
    for stop in request.stop_sequences.iter().filter(|s| !s.is_empty()) {
        if let Some(at) = text.find(stop.as_str()) {
            text = &text[..at];
        }
    }
    let limit = request.max_output_tokens.saturating_mul(4);
    match text.char_indices().nth(limit) {
        Some((at, _)) => (text[..at].to_string(), FinishReason::Truncated),
        None => (text.to_string(), FinishReason::Completed),
    }
}

impl CompletionClient for MockClient {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &CompletionRequest) -> CompletionResult {
        let started = Instant::now();
        let response = match self.fixtures.responses.get(&prompt_digest(&request.prompt)) {
            Some(Some(text)) => text.as_str(),
            Some(None) => return CompletionResult::refused(started),
            None => match &self.fixtures.fallback {
                Fallback::Respond(text) => text.as_str(),
                Fallback::Refuse => return CompletionResult::refused(started),
                Fallback::TransportError => return CompletionResult::failed("no fixture for prompt", started),
            },
        };
        let (text, finish_reason) = shape_output(response, request);
        CompletionResult {
            text,
            finish_reason,
            latency_ms: elapsed_ms(started),
            error: None,
        }
    }
}

fn default_url_env() -> String {
    "FLOWGEN_COMPLETION_URL".into()
}

fn default_api_key_env() -> String {
    "FLOWGEN_API_KEY".into()
}

fn default_true() -> bool {
    true
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_max_retries() -> u32 {
    3
}

fn default_text_pointer() -> String {
    "/choices/0/message/content".into()
}

fn default_finish_pointer() -> String {
    "/choices/0/finish_reason".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpCompletionConfig {
    /// Endpoint URL; read from `url_env` when absent.
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default = "default_url_env")]
    pub url_env: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_true")]
    pub require_api_key: bool,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Request body with placeholders. A string that is exactly one of
    /// `{prompt}`, `{model}`, `{max_tokens}`, `{temperature}` or `{stop}`
    /// becomes the typed value; `{prompt}` inside a longer string is
    /// substituted as text. Defaults to a chat-completions body.
    #[serde(default)]
    pub payload_template: Option<Value>,
    #[serde(default = "default_text_pointer")]
    pub text_pointer: String,
    #[serde(default = "default_finish_pointer")]
    pub finish_pointer: String,
}

impl Default for HttpCompletionConfig {
    fn default() -> Self {
        Self {
            url: None,
            url_env: default_url_env(),
            api_key_env: default_api_key_env(),
            require_api_key: true,
            model: String::new(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            payload_template: None,
            text_pointer: default_text_pointer(),
            finish_pointer: default_finish_pointer(),
        }
    }
}

/// Client for a JSON completion service, by default chat-completions shaped.
#[derive(Debug, Clone)]
pub struct HttpCompletionClient {
    config: HttpCompletionConfig,
    endpoint: JsonEndpoint,
    retry: RetryPolicy,
    name: String,
}

impl HttpCompletionClient {
    pub fn new(config: HttpCompletionConfig) -> Result<Self, GenerationError> {
        let url = config
            .url
            .clone()
            .filter(|u| !u.trim().is_empty())
            .or_else(|| token_from_env(&config.url_env))
            .ok_or_else(|| GenerationError::Config(format!("no endpoint URL; set {}", config.url_env)))?;
        let key = token_from_env(&config.api_key_env);
        if config.require_api_key && key.is_none() {
            return Err(GenerationError::Config(format!(
                "no API key; set {}",
                config.api_key_env
            )));
        }
        let endpoint = JsonEndpoint::new(url, key, Duration::from_secs(config.timeout_secs));
        let retry = RetryPolicy {
            max_retries: config.max_retries,
            ..RetryPolicy::default()
        };
        Ok(Self {
            name: format!("http:{}", config.model),
            config,
            endpoint,
            retry,
        })
    }

    pub fn with_retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn payload(&self, request: &CompletionRequest) -> Value {
        let model = if request.model_name.is_empty() {
            &self.config.model
        } else {
            &request.model_name
        };
        match &self.config.payload_template {
            Some(template) => fill_template(template, request, model),
            None => {
                let mut body = json!({
                    "model": model,
                    "messages": [{"role": "user", "content": request.prompt}],
                    "max_tokens": request.max_output_tokens,
                    "temperature": request.temperature,
                });
                if !request.stop_sequences.is_empty() {
                    body["stop"] = json!(request.stop_sequences);
                }
                body
            }
        }
    }

    fn interpret(&self, response: &Value, started: Instant) -> CompletionResult {
        let finish = response
            .pointer(&self.config.finish_pointer)
            .and_then(Value::as_str)
            .unwrap_or("stop");
        let finish_reason = match finish {
            "length" | "max_tokens" => FinishReason::Truncated,
            "content_filter" | "refusal" => return CompletionResult::refused(started),
            _ => FinishReason::Completed,
        };
        match response.pointer(&self.config.text_pointer).and_then(Value::as_str) {
            Some(text) => CompletionResult {
                text: text.to_string(),
                finish_reason,
                latency_ms: elapsed_ms(started),
                error: None,
            },
            None => CompletionResult::failed(format!("response has no text at {}", self.config.text_pointer), started),
        }
    }
}

fn fill_template(template: &Value, request: &CompletionRequest, model: &str) -> Value {
    match template {
        Value::String(s) => match s.as_str() {
            "{prompt}" => json!(request.prompt),
            "{model}" => json!(model),
            "{max_tokens}" => json!(request.max_output_tokens),
            "{temperature}" => json!(request.temperature),
            "{stop}" => json!(request.stop_sequences),
            other => json!(other.replace("{prompt}", &request.prompt)),
        },
        Value::Array(items) => Value::Array(items.iter().map(|v| fill_template(v, request, model)).collect()),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), fill_template(v, request, model)))
                .collect(),
        ),
        other => other.clone(),
    }
}

impl CompletionClient for HttpCompletionClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &CompletionRequest) -> CompletionResult {
        let started = Instant::now();
        match self.endpoint.post_with_retry(&self.payload(request), &self.retry) {
            Ok(response) => self.interpret(&response, started),
            // Content filters commonly answer 400 with a `content_filter` code.
            Err(PostError::Status { status: 400, body }) if body.contains("content_filter") => {
                CompletionResult::refused(started)
            }
            Err(e) => CompletionResult::failed(e.to_string(), started),
        }
    }
}

/// Pulls the DSL out of a model reply: the body of the first fenced code
/// block if there is one (an unclosed fence runs to the end), otherwise the
/// whole reply. Surrounding whitespace is trimmed.
pub fn extract_dsl(text: &str) -> String {
    let Some(open) = text.find("```") else {
        return text.trim().to_string();
    };
    let after = &text[open + 3..];
    // Skip the info string, e.g. ```javascript
    let body = match after.find('\n') {
        Some(nl) => &after[nl + 1..],
        None => "",
    };
    let body = match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    };
    body.trim().to_string()
}
