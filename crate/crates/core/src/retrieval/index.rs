use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{normalize, Embedder, EmbeddingVector, RetrievalError};
use crate::dataset::Sample;

const FORMAT: &str = "flowgen-index";
const VERSION: u32 = 1;
const EMBED_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredId {
    pub id: String,
    pub score: f64,
}

/// Exact cosine index over unit vectors. Entries keep insertion order,
/// which also breaks score ties.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleIndex {
    embedder: String,
    dimension: usize,
    ids: Vec<String>,
    /// Row-major, `ids.len() * dimension` values.
    vectors: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    embedder: String,
    dimension: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl SampleIndex {
    pub fn empty(embedder: impl Into<String>, dimension: usize) -> Self {
        Self {
            embedder: embedder.into(),
            dimension,
            ids: Vec::new(),
            vectors: Vec::new(),
        }
    }

    /// Embeds `(id, text)` pairs in order.
    pub fn build<I, S, T>(entries: I, embedder: &dyn Embedder) -> Result<Self, RetrievalError>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let (ids, texts): (Vec<String>, Vec<T>) = entries.into_iter().map(|(id, t)| (id.into(), t)).unzip();
        let mut index = Self::empty(embedder.name(), embedder.dimension());
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(RetrievalError::DuplicateId(id.clone()));
            }
        }
        let texts: Vec<&str> = texts.iter().map(AsRef::as_ref).collect();
        let mut ids = ids.into_iter();
        for chunk in texts.chunks(EMBED_CHUNK) {
            for vector in embedder.embed_batch(chunk)? {
                index.push(ids.next().expect("one id per text"), vector)?;
            }
        }
        Ok(index)
    }

    fn push(&mut self, id: String, vector: EmbeddingVector) -> Result<(), RetrievalError> {
        if vector.dimension() != self.dimension {
            return Err(RetrievalError::DimensionDrift {
                embedder: self.embedder.clone(),
                expected: self.dimension,
                actual: vector.dimension(),
            });
        }
        let vector = if vector.is_normalized() {
            vector
        } else {
            normalize(&vector)?
        };
        self.ids.push(id);
        self.vectors.extend_from_slice(vector.components());
        Ok(())
    }

    pub fn embedder_name(&self) -> &str {
        &self.embedder
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, position: usize) -> &[f64] {
        &self.vectors[position * self.dimension..(position + 1) * self.dimension]
    }

    /// Top `k` entries by cosine, descending; equal scores keep insertion order.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<ScoredId>, RetrievalError> {
        if query.dimension() != self.dimension {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dimension,
                actual: query.dimension(),
            });
        }
        let k = k.min(self.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        let query = if query.is_normalized() {
            query.clone()
        } else {
            normalize(query)?
        };
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .map(|i| {
                let s: f64 = self.vector(i).iter().zip(query.components()).map(|(a, b)| a * b).sum();
                (i, s.clamp(-1.0, 1.0))
            })
            .collect();
        // Scores are finite; partial_cmp also keeps 0.0 and -0.0 tied.
        let order = |a: &(usize, f64), b: &(usize, f64)| -> Ordering {
            b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored
            .into_iter()
            .map(|(i, score)| ScoredId {
                id: self.ids[i].clone(),
                score,
            })
            .collect())
    }

    pub fn to_json(&self) -> String {
        let file = IndexFile {
            format: FORMAT.into(),
            version: VERSION,
            embedder: self.embedder.clone(),
            dimension: self.dimension,
            ids: self.ids.clone(),
            vectors: (0..self.len()).map(|i| self.vector(i).to_vec()).collect(),
        };
        serde_json::to_string(&file).expect("index serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let file: IndexFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(format!("unsupported index format {} v{}", file.format, file.version));
        }
        if file.ids.len() != file.vectors.len() {
            return Err("ids and vectors differ in length".into());
        }
        let mut index = Self::empty(file.embedder, file.dimension);
        let mut seen = HashSet::new();
        for (id, components) in file.ids.into_iter().zip(file.vectors) {
            if !seen.insert(id.clone()) {
                return Err(format!("duplicate id `{id}`"));
            }
            let vector = EmbeddingVector::new(components);
            if (vector.norm() - 1.0).abs() > 1e-6 {
                return Err(format!("vector for `{id}` is not unit length"));
            }
            let vector = EmbeddingVector::assume_normalized(vector.components().to_vec());
            index.push(id, vector).map_err(|e| e.to_string())?;
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| RetrievalError::Persistence {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let path = path.as_ref();
        let fail = |message: String| RetrievalError::Persistence {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
        Self::from_json(&text).map_err(fail)
    }

    /// Errors unless `embedder` is the one this index was built with.
    pub fn check_embedder(&self, embedder: &dyn Embedder) -> Result<(), RetrievalError> {
        if embedder.name() != self.embedder || embedder.dimension() != self.dimension {
            return Err(RetrievalError::EmbedderMismatch {
                index: self.embedder.clone(),
                embedder: embedder.name().to_string(),
            });
        }
        Ok(())
    }
}

/// Index over sample prompts, keyed by sample id.
pub fn build_index(samples: &[Sample], embedder: &dyn Embedder) -> Result<SampleIndex, RetrievalError> {
    SampleIndex::build(samples.iter().map(|s| (s.id.as_str(), s.prompt.as_str())), embedder)
}

/// The `k` stored prompts closest to `query`.
pub fn retrieve_few_shots(
    index: &SampleIndex,
    query: &str,
    k: usize,
    embedder: &dyn Embedder,
) -> Result<Vec<ScoredId>, RetrievalError> {
    if k == 0 || index.is_empty() {
        return Ok(Vec::new());
    }
    index.check_embedder(embedder)?;
    index.search(&embedder.embed(query)?, k)
}
