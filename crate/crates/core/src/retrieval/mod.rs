//! Embedding-based few-shot retrieval and target-similarity training pairs.

mod embedder;
mod index;
mod tst;

pub use embedder::{Embedder, HashingEmbedder, HttpEmbedder, HttpEmbedderConfig};
pub use index::{build_index, retrieve_few_shots, SampleIndex, ScoredId};
pub use tst::{
    embedder_tst_loss, generate_tst_pairs, tst_loss, PairLabel, TstPair, DEFAULT_PAIR_BUDGET, DEFAULT_THRESHOLD,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedder `{embedder}` returned dimension {actual}, expected {expected}")]
    DimensionDrift {
        embedder: String,
        expected: usize,
        actual: usize,
    },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("text has no tokens to embed")]
    EmptyText,
    #[error("embedding service: {0}")]
    Service(String),
    #[error("index was built with `{index}` but queried with `{embedder}`")]
    EmbedderMismatch { index: String, embedder: String },
    #[error("no pairs to evaluate")]
    NoPairs,
    #[error("index file {path}: {message}")]
    Persistence { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    components: Vec<f64>,
    normalized: bool,
}

impl EmbeddingVector {
    /// Wraps raw components; not marked normalized.
    pub fn new(components: Vec<f64>) -> Self {
        Self {
            components,
            normalized: false,
        }
    }

    /// For components already known to have unit norm.
    pub(crate) fn assume_normalized(components: Vec<f64>) -> Self {
        Self {
            components,
            normalized: true,
        }
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Scales to unit L2 norm.
pub fn normalize(v: &EmbeddingVector) -> Result<EmbeddingVector, RetrievalError> {
    let norm = v.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(RetrievalError::ZeroVector);
    }
    Ok(EmbeddingVector {
        components: v.components.iter().map(|x| x / norm).collect(),
        normalized: true,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity, clamped to [-1, 1].
///
/// Unit inputs take a plain dot product. Otherwise the result is computed
/// in one step as `a.b / sqrt(|a|^2 |b|^2)`, so integer count vectors whose
/// cosine is exactly representable (e.g. 0.7 from 35 / 50) come out exact.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if a.dimension() != b.dimension() {
        return Err(RetrievalError::DimensionMismatch {
            expected: a.dimension(),
            actual: b.dimension(),
        });
    }
    let value = if a.normalized && b.normalized {
        dot(&a.components, &b.components)
    } else {
        let squared = dot(&a.components, &a.components) * dot(&b.components, &b.components);
        if squared == 0.0 || !squared.is_finite() {
            return Err(RetrievalError::ZeroVector);
        }
        dot(&a.components, &b.components) / squared.sqrt()
    };
    Ok(value.clamp(-1.0, 1.0))
}
