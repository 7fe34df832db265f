#![allow(dead_code)]

use std::path::PathBuf;

use flowgen_core::catalog::{load_catalog_file, ApiCatalog};
use flowgen_core::dataset::{load_dataset, Sample};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn corpus() -> Vec<Sample> {
    load_dataset(fixture("corpus.jsonl")).expect("fixture corpus loads")
}

pub fn catalog() -> ApiCatalog {
    load_catalog_file(fixture("catalog.json")).expect("fixture catalog loads")
}

pub fn held_out() -> Vec<String> {
    let text = std::fs::read_to_string(fixture("held_out.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}
