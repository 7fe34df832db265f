use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{normalize, EmbeddingVector, RetrievalError};
use crate::http::{token_from_env, JsonEndpoint, RetryPolicy};

/// Maps text to a fixed-dimension unit vector.
///
/// Implementations must be deterministic: the same text always yields the
/// same vector from the same instance.
pub trait Embedder: Send + Sync {
    /// Identifies the model and its parameters; stored alongside indexes.
    fn name(&self) -> &str;

    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError>;

    /// Order-preserving batch form.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Offline embedder: every whitespace token is lower-cased, stripped of
/// surrounding punctuation and hashed into one of `dimension` buckets.
///
/// `embed` returns the raw bucket counts, unnormalized; [`cosine`] and the
/// index normalize them. Keeping integer counts lets cosine be computed
/// without per-vector rounding.
///
/// [`cosine`]: super::cosine
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
    seed: u64,
    name: String,
}

impl HashingEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self {
            dimension,
            seed,
            name: format!("hashing-d{dimension}-s{seed}"),
        }
    }

    /// The normalized tokens this embedder counts.
    pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
        text.split_whitespace()
            .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
            .filter(|t| !t.is_empty())
    }

    pub fn bucket(&self, token: &str) -> usize {
        // 64-bit FNV-1a over the seed then the token bytes.
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in self.seed.to_le_bytes().iter().chain(token.as_bytes()) {
            hash ^= u64::from(*byte);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        (hash % self.dimension as u64) as usize
    }

    /// Raw bucket counts before normalization.
    pub fn counts(&self, text: &str) -> Vec<f64> {
        let mut counts = vec![0.0; self.dimension];
        for token in Self::tokens(text) {
            counts[self.bucket(&token)] += 1.0;
        }
        counts
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(256, 0)
    }
}

impl Embedder for HashingEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let counts = self.counts(text);
        if counts.iter().all(|c| *c == 0.0) {
            return Err(RetrievalError::EmptyText);
        }
        Ok(EmbeddingVector::new(counts))
    }
}

fn default_url_env() -> String {
    "FLOWGEN_EMBEDDING_URL".to_string()
}

fn default_api_key_env() -> String {
    "FLOWGEN_EMBEDDING_API_KEY".to_string()
}

fn default_batch_size() -> usize {
    64
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_retries() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpEmbedderConfig {
    /// Endpoint URL; read from `url_env` when empty.
    #[serde(default)]
    pub url: String,
    #[serde(default = "default_url_env")]
    pub url_env: String,
    pub model: String,
    pub dimension: usize,
    /// Environment variable holding the bearer token.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

impl HttpEmbedderConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>, dimension: usize) -> Self {
        Self {
            url: url.into(),
            url_env: default_url_env(),
            model: model.into(),
            dimension,
            api_key_env: default_api_key_env(),
            batch_size: default_batch_size(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
        }
    }
}

/// Client for an embedding service.
///
/// Request body: `{"model": ..., "input": [texts]}`. The response may be
/// either `{"data": [{"embedding": [...], "index": i}, ...]}` or
/// `{"embeddings": [[...], ...]}`; vectors are returned in input order.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    config: HttpEmbedderConfig,
    endpoint: JsonEndpoint,
    retry: RetryPolicy,
    name: String,
}

impl HttpEmbedder {
    pub fn new(config: HttpEmbedderConfig) -> Result<Self, RetrievalError> {
        let url = match config.url.trim() {
            "" => token_from_env(&config.url_env)
                .ok_or_else(|| RetrievalError::Service(format!("no embedding endpoint URL; set {}", config.url_env)))?,
            url => url.to_string(),
        };
        if config.dimension == 0 || config.batch_size == 0 {
            return Err(RetrievalError::Service(
                "dimension and batch_size must be positive".into(),
            ));
        }
        let endpoint = JsonEndpoint::new(
            url,
            token_from_env(&config.api_key_env),
            Duration::from_secs(config.timeout_secs),
        );
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

    fn request(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        let body = json!({"model": self.config.model, "input": texts});
        let response = self
            .endpoint
            .post_with_retry(&body, &self.retry)
            .map_err(|e| RetrievalError::Service(e.to_string()))?;
        let raw = parse_embedding_response(&response)?;
        if raw.len() != texts.len() {
            return Err(RetrievalError::Service(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                raw.len()
            )));
        }
        raw.into_iter()
            .map(|components| {
                if components.len() != self.config.dimension {
                    return Err(RetrievalError::DimensionDrift {
                        embedder: self.name.clone(),
                        expected: self.config.dimension,
                        actual: components.len(),
                    });
                }
                normalize(&EmbeddingVector::new(components))
            })
            .collect()
    }
}

fn as_vector(value: &Value) -> Result<Vec<f64>, RetrievalError> {
    value
        .as_array()
        .ok_or_else(|| RetrievalError::Service("embedding is not an array".into()))?
        .iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| RetrievalError::Service("embedding component is not a number".into()))
        })
        .collect()
}

fn parse_embedding_response(response: &Value) -> Result<Vec<Vec<f64>>, RetrievalError> {
    if let Some(data) = response.get("data").and_then(Value::as_array) {
        let mut rows = data
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let index = item.get("index").and_then(Value::as_u64).map_or(i, |x| x as usize);
                let vector = item
                    .get("embedding")
                    .ok_or_else(|| RetrievalError::Service("missing `embedding` field".into()))
                    .and_then(as_vector)?;
                Ok((index, vector))
            })
            .collect::<Result<Vec<_>, RetrievalError>>()?;
        rows.sort_by_key(|(index, _)| *index);
        return Ok(rows.into_iter().map(|(_, v)| v).collect());
    }
    if let Some(list) = response.get("embeddings").and_then(Value::as_array) {
        return list.iter().map(as_vector).collect();
    }
    Err(RetrievalError::Service(
        "response has neither `data` nor `embeddings`".into(),
    ))
}

impl Embedder for HttpEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        self.request(&[text]).map(|mut v| v.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.batch_size) {
            out.extend(self.request(chunk)?);
        }
        Ok(out)
    }
}
