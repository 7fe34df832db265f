mod common;

use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flowgen_core::dataset::Sample;
use flowgen_core::dsl::extract_api_sequence;
use flowgen_core::retrieval::*;

fn unit(v: &EmbeddingVector) -> EmbeddingVector {
    if v.is_normalized() {
        v.clone()
    } else {
        normalize(v).unwrap()
    }
}

/// Dot products of unit vectors, stably sorted; ties keep insertion order.
fn brute_top_k(index_vectors: &[(String, EmbeddingVector)], query: &EmbeddingVector, k: usize) -> Vec<(String, f64)> {
    let query = unit(query);
    let mut all: Vec<(String, f64)> = index_vectors
        .iter()
        .map(|(id, v)| (id.clone(), cosine(&unit(v), &query).unwrap()))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    all.truncate(k);
    all
}

#[test]
fn corpus_queries_match_brute_force() {
    let mut samples = common::corpus();
    // Duplicate prompts under new ids so ties occur.
    let copies: Vec<Sample> = samples[..10]
        .iter()
        .map(|s| Sample {
            id: format!("{}-copy", s.id),
            ..s.clone()
        })
        .collect();
    samples.extend(copies);
    let embedder = HashingEmbedder::new(128, 0);
    let index = build_index(&samples, &embedder).unwrap();
    let vectors: Vec<(String, EmbeddingVector)> = samples
        .iter()
        .map(|s| (s.id.clone(), embedder.embed(&s.prompt).unwrap()))
        .collect();

    let words: Vec<&str> = samples.iter().flat_map(|s| s.prompt.split_whitespace()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ties_seen = 0;
    for q in 0..100 {
        let query = if q % 4 == 0 {
            samples[rng.random_range(0..samples.len())].prompt.clone()
        } else {
            (0..rng.random_range(1..8))
                .map(|_| words[rng.random_range(0..words.len())])
                .collect::<Vec<_>>()
                .join(" ")
        };
        let k = rng.random_range(1..=samples.len() + 3);
        let got: Vec<(String, f64)> = retrieve_few_shots(&index, &query, k, &embedder)
            .unwrap()
            .into_iter()
            .map(|h| (h.id, h.score))
            .collect();
        let want = brute_top_k(&vectors, &embedder.embed(&query).unwrap(), k);
        assert_eq!(got, want, "query {q}: {query}");
        ties_seen += got.windows(2).filter(|w| w[0].1 == w[1].1).count();
    }
    assert!(ties_seen > 0);
}

/// Embeds `"v<n>"` as the n-th row of a fixed table.
struct TableEmbedder {
    rows: Vec<Vec<f64>>,
}

impl Embedder for TableEmbedder {
    fn name(&self) -> &str {
        "table"
    }

    fn dimension(&self) -> usize {
        self.rows[0].len()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let n: usize = text[1..].parse().unwrap();
        normalize(&EmbeddingVector::new(self.rows[n].clone()))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coarse_vectors_match_brute_force(
        rows in prop::collection::vec(prop::collection::vec(-2i8..=2, 3), 1..40)
            .prop_filter("no zero rows", |rows| rows.iter().all(|r| r.iter().any(|x| *x != 0))),
        query in prop::collection::vec(-2i8..=2, 3).prop_filter("non-zero", |q| q.iter().any(|x| *x != 0)),
        k in 0usize..45,
    ) {
        let table = TableEmbedder { rows: rows.iter().map(|r| r.iter().map(|x| f64::from(*x)).collect()).collect() };
        let index = SampleIndex::build((0..rows.len()).map(|i| (format!("id{i}"), format!("v{i}"))), &table).unwrap();
        let vectors: Vec<(String, EmbeddingVector)> =
            (0..rows.len()).map(|i| (format!("id{i}"), table.embed(&format!("v{i}")).unwrap())).collect();
        let q = normalize(&EmbeddingVector::new(query.iter().map(|x| f64::from(*x)).collect())).unwrap();
        let got: Vec<(String, f64)> = index.search(&q, k).unwrap().into_iter().map(|h| (h.id, h.score)).collect();
        prop_assert_eq!(got, brute_top_k(&vectors, &q, k));
    }
}

#[test]
fn saved_index_answers_identically() {
    let samples = common::corpus();
    let embedder = HashingEmbedder::new(64, 5);
    let index = build_index(&samples, &embedder).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.json");
    index.save(&path).unwrap();
    let loaded = SampleIndex::load(&path).unwrap();
    for s in samples.iter().take(10) {
        assert_eq!(
            retrieve_few_shots(&index, &s.prompt, 7, &embedder).unwrap(),
            retrieve_few_shots(&loaded, &s.prompt, 7, &embedder).unwrap()
        );
    }
}

/// Independent bucket counts: FNV-1a 64 over the seed's little-endian bytes
/// followed by the token, for lower-cased whitespace tokens with leading and
/// trailing non-alphanumerics removed.
fn oracle_counts(text: &str, dimension: u64, seed: u64) -> HashMap<u64, i64> {
    let mut counts = HashMap::new();
    for raw in text.split_whitespace() {
        let token = raw.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
        if token.is_empty() {
            continue;
        }
        let mut h: u64 = 14695981039346656037;
        for b in seed.to_le_bytes().iter().chain(token.as_bytes()) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(1099511628211);
        }
        *counts.entry(h % dimension).or_insert(0) += 1;
    }
    counts
}

/// cos > 0.7 decided in integers: dot > 0.7 |a||b| with dot >= 0 is
/// 100 dot^2 > 49 |a|^2 |b|^2.
fn oracle_positive(a: &HashMap<u64, i64>, b: &HashMap<u64, i64>) -> bool {
    let dot: i64 = a.iter().map(|(k, x)| x * b.get(k).unwrap_or(&0)).sum();
    let na: i64 = a.values().map(|x| x * x).sum();
    let nb: i64 = b.values().map(|x| x * x).sum();
    dot > 0 && 100 * (dot as i128).pow(2) > 49 * (na as i128) * (nb as i128)
}

fn jaccard(a: &Sample, b: &Sample) -> f64 {
    let sa: HashSet<String> = extract_api_sequence(&a.flow).into_iter().collect();
    let sb: HashSet<String> = extract_api_sequence(&b.flow).into_iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        1.0
    } else {
        sa.intersection(&sb).count() as f64 / union as f64
    }
}

#[test]
fn tst_labels_match_integer_oracle() {
    let samples: Vec<Sample> = common::corpus().into_iter().take(50).collect();
    // Small dimension pushes plenty of pairs over the threshold.
    for (dimension, seed) in [(16u64, 0u64), (256, 3)] {
        let embedder = HashingEmbedder::new(dimension as usize, seed);
        let pairs = generate_tst_pairs(&samples, &embedder, DEFAULT_THRESHOLD, DEFAULT_PAIR_BUDGET).unwrap();
        assert_eq!(pairs.len(), 50 * 49 / 2);
        let by_id: HashMap<&str, &Sample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
        let mut positives = 0;
        for p in &pairs {
            assert!(p.id_i < p.id_j);
            let (a, b) = (by_id[p.id_i.as_str()], by_id[p.id_j.as_str()]);
            let expected = oracle_positive(
                &oracle_counts(&a.prompt, dimension, seed),
                &oracle_counts(&b.prompt, dimension, seed),
            );
            assert_eq!(p.label == PairLabel::Positive, expected, "{} / {}", p.id_i, p.id_j);
            assert_eq!(p.program_similarity, jaccard(a, b));
            positives += usize::from(expected);
        }
        assert!(positives > 0 && positives < pairs.len());
    }
}
