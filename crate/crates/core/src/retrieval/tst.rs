//! Target-similarity tuning data: prompt pairs labelled by prompt cosine,
//! with the program similarity an utterance model should learn to predict.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{cosine, Embedder, EmbeddingVector, RetrievalError};
use crate::dataset::Sample;
use crate::metrics::jaccard_program_similarity;

/// Pairs whose prompt cosine is strictly above this are positive.
pub const DEFAULT_THRESHOLD: f64 = 0.7;
pub const DEFAULT_PAIR_BUDGET: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    Positive,
    Negative,
}

impl PairLabel {
    pub fn from_similarity(utterance_similarity: f64, threshold: f64) -> Self {
        if utterance_similarity > threshold {
            PairLabel::Positive
        } else {
            PairLabel::Negative
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TstPair {
    pub id_i: String,
    pub id_j: String,
    pub prompt_i: String,
    pub prompt_j: String,
    /// Cosine of the two prompt embeddings.
    pub utterance_similarity: f64,
    /// Jaccard similarity of the two flows' function-name sets.
    pub program_similarity: f64,
    pub label: PairLabel,
}

/// Enumerates unordered sample pairs in lexicographic id order, stopping
/// after `budget` pairs. Input order does not matter.
pub fn generate_tst_pairs(
    samples: &[Sample],
    embedder: &dyn Embedder,
    threshold: f64,
    budget: usize,
) -> Result<Vec<TstPair>, RetrievalError> {
    let mut sorted: Vec<&Sample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    for w in sorted.windows(2) {
        if w[0].id == w[1].id {
            return Err(RetrievalError::DuplicateId(w[0].id.clone()));
        }
    }
    if budget == 0 || sorted.len() < 2 {
        return Ok(Vec::new());
    }
    let prompts: Vec<&str> = sorted.iter().map(|s| s.prompt.as_str()).collect();
    let vectors = embedder.embed_batch(&prompts)?;

    let total = sorted.len() * (sorted.len() - 1) / 2;
    let mut pairs = Vec::with_capacity(budget.min(total));
    'outer: for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            if pairs.len() == budget {
                break 'outer;
            }
            let utterance_similarity = cosine(&vectors[i], &vectors[j])?;
            pairs.push(TstPair {
                id_i: sorted[i].id.clone(),
                id_j: sorted[j].id.clone(),
                prompt_i: sorted[i].prompt.clone(),
                prompt_j: sorted[j].prompt.clone(),
                utterance_similarity,
                program_similarity: jaccard_program_similarity(&sorted[i].flow, &sorted[j].flow),
                label: PairLabel::from_similarity(utterance_similarity, threshold),
            });
        }
    }
    Ok(pairs)
}

/// Mean squared gap between a candidate utterance similarity and the
/// program similarity target, over all pairs.
pub fn tst_loss<F>(pairs: &[TstPair], mut candidate_similarity: F) -> Result<f64, RetrievalError>
where
    F: FnMut(&str, &str) -> f64,
{
    if pairs.is_empty() {
        return Err(RetrievalError::NoPairs);
    }
    let sum: f64 = pairs
        .iter()
        .map(|p| {
            let gap = candidate_similarity(&p.prompt_i, &p.prompt_j) - p.program_similarity;
            gap * gap
        })
        .sum();
    Ok(sum / pairs.len() as f64)
}

/// Scores an embedder's cosine as the candidate similarity.
pub fn embedder_tst_loss(pairs: &[TstPair], embedder: &dyn Embedder) -> Result<f64, RetrievalError> {
    let mut seen = HashSet::new();
    let unique: Vec<&str> = pairs
        .iter()
        .flat_map(|p| [p.prompt_i.as_str(), p.prompt_j.as_str()])
        .filter(|t| seen.insert(*t))
        .collect();
    let vectors: HashMap<&str, EmbeddingVector> = unique.iter().copied().zip(embedder.embed_batch(&unique)?).collect();
    let mut failure = None;
    let loss = tst_loss(pairs, |a, b| match cosine(&vectors[a], &vectors[b]) {
        Ok(c) => c,
        Err(e) => {
            failure.get_or_insert(e);
            0.0
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(loss),
    }
}
