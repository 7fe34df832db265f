use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::dsl::extract_api_sequence;

/// How many in-domain test samples to draw from the non-held-out pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InDomainSize {
    /// Share of the eligible samples, clamped to [0, 1] and rounded.
    Fraction(f64),
    /// Capped at the number of eligible samples.
    Count(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_in_domain: InDomainSize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_in_domain: InDomainSize::Fraction(0.1),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub test_in_domain: Vec<Sample>,
    pub test_out_of_domain: Vec<Sample>,
    pub held_out_apis: Vec<String>,
}

fn first_api(sample: &Sample) -> String {
    extract_api_sequence(&sample.flow)
        .into_iter()
        .next()
        .unwrap_or_default()
}

/// Splits off every sample that calls a held-out API as the out-of-domain
/// test set, then draws in-domain test samples from the rest, stratified by
/// each flow's first API. Every input sample lands in exactly one part, and
/// each part keeps input order.
pub fn make_ood_split(samples: &[Sample], held_out_apis: &[String], config: &SplitConfig) -> DatasetSplit {
    let held_out: HashSet<&str> = held_out_apis.iter().map(String::as_str).collect();
    let (ood, rest): (Vec<usize>, Vec<usize>) = (0..samples.len()).partition(|&i| {
        extract_api_sequence(&samples[i].flow)
            .iter()
            .any(|name| held_out.contains(name.as_str()))
    });

    let wanted = match config.test_in_domain {
        InDomainSize::Fraction(f) => (f.clamp(0.0, 1.0) * rest.len() as f64).round() as usize,
        InDomainSize::Count(n) => n,
    }
    .min(rest.len());

    let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for &i in &rest {
        strata.entry(first_api(&samples[i])).or_default().push(i);
    }

    // Largest-remainder allocation of `wanted` across strata.
    let mut quotas: Vec<(String, usize, f64)> = strata
        .iter()
        .map(|(key, members)| {
            let exact = wanted as f64 * members.len() as f64 / rest.len().max(1) as f64;
            (key.clone(), exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut by_remainder: Vec<usize> = (0..quotas.len()).collect();
    by_remainder.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(a.cmp(&b)));
    for &q in by_remainder.iter().take(wanted - assigned) {
        quotas[q].1 += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut chosen = HashSet::new();
    for (key, quota, _) in &quotas {
        let mut members = strata[key].clone();
        members.shuffle(&mut rng);
        chosen.extend(members.into_iter().take(*quota));
    }

    let pick = |indices: &[usize], keep: &dyn Fn(usize) -> bool| -> Vec<Sample> {
        indices
            .iter()
            .copied()
            .filter(|&i| keep(i))
            .map(|i| samples[i].clone())
            .collect()
    };
    DatasetSplit {
        train: pick(&rest, &|i| !chosen.contains(&i)),
        test_in_domain: pick(&rest, &|i| chosen.contains(&i)),
        test_out_of_domain: pick(&ood, &|_| true),
        held_out_apis: held_out_apis.to_vec(),
    }
}
