//! API metadata: loading, lookup, and hallucination checks for parsed flows.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::dsl::Flow;

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("failed to read catalog {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("duplicate function name `{0}`")]
    Duplicate(String),
    #[error("catalog entry `{entry}`: {message}")]
    Schema { entry: String, message: String },
}

fn null_as_default<'de, D, T>(deserializer: D) -> Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: Default + Deserialize<'de>,
{
    Ok(Option::<T>::deserialize(deserializer)?.unwrap_or_default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterInfo {
    #[serde(rename = "Key")]
    pub key: String,
    #[serde(rename = "Type", default, deserialize_with = "null_as_default")]
    pub type_name: String,
    #[serde(rename = "Summary", default, deserialize_with = "null_as_default")]
    pub summary: String,
    #[serde(rename = "Format", default)]
    pub format: Option<String>,
    #[serde(rename = "Description", default, deserialize_with = "null_as_default")]
    pub description: String,
}

impl ParameterInfo {
    /// DSL argument keys match either the full key or its last `/` segment,
    /// so `To` is accepted for `emailMessage/To`.
    pub fn matches(&self, argument_key: &str) -> bool {
        self.key == argument_key || self.key.rsplit('/').next() == Some(argument_key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionDefinition {
    #[serde(rename = "FunctionName")]
    pub function_name: String,
    #[serde(rename = "Description", default, deserialize_with = "null_as_default")]
    pub description: String,
    #[serde(rename = "IsInTrainingSet", default, deserialize_with = "null_as_default")]
    pub is_in_training_set: bool,
    #[serde(rename = "DisplayName", default, deserialize_with = "null_as_default")]
    pub display_name: String,
    #[serde(rename = "ParametersInfo")]
    pub parameters: Vec<ParameterInfo>,
    #[serde(rename = "ResponseSchema", default, deserialize_with = "null_as_default")]
    pub response_schema: Vec<serde_json::Value>,
    #[serde(rename = "IsTrigger", default, deserialize_with = "null_as_default")]
    pub is_trigger: bool,
}

impl FunctionDefinition {
    fn check(&self) -> Result<(), String> {
        match self.function_name.split_once('.') {
            Some((ns, f)) if !ns.is_empty() && !f.is_empty() && !f.contains('.') => {}
            _ => {
                return Err(format!(
                    "FunctionName `{}` must be `namespace.function`",
                    self.function_name
                ))
            }
        }
        let mut seen = HashSet::new();
        for p in &self.parameters {
            if p.key.is_empty() {
                return Err("parameter with empty Key".into());
            }
            if !seen.insert(p.key.as_str()) {
                return Err(format!("duplicate parameter key `{}`", p.key));
            }
        }
        Ok(())
    }

    pub fn accepts_key(&self, argument_key: &str) -> bool {
        self.parameters.iter().any(|p| p.matches(argument_key))
    }
}

/// Immutable set of function definitions keyed by qualified name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ApiCatalog {
    definitions: BTreeMap<String, FunctionDefinition>,
}

impl ApiCatalog {
    pub fn from_definitions(definitions: impl IntoIterator<Item = FunctionDefinition>) -> Result<Self, CatalogError> {
        let mut map = BTreeMap::new();
        for def in definitions {
            def.check().map_err(|message| CatalogError::Schema {
                entry: def.function_name.clone(),
                message,
            })?;
            if map.contains_key(&def.function_name) {
                return Err(CatalogError::Duplicate(def.function_name));
            }
            map.insert(def.function_name.clone(), def);
        }
        Ok(Self { definitions: map })
    }

    pub fn get(&self, qualified_name: &str) -> Option<&FunctionDefinition> {
        self.definitions.get(qualified_name)
    }

    pub fn contains(&self, qualified_name: &str) -> bool {
        self.definitions.contains_key(qualified_name)
    }

    pub fn len(&self) -> usize {
        self.definitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.definitions.is_empty()
    }

    /// Definitions in name order.
    pub fn iter(&self) -> impl Iterator<Item = &FunctionDefinition> {
        self.definitions.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.definitions.keys().map(String::as_str)
    }
}

/// Top-level object entries in document order, duplicates kept.
struct OrderedEntries(Vec<(String, serde_json::Value)>);

impl<'de> Deserialize<'de> for OrderedEntries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor;
        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = OrderedEntries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object keyed by function name")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut entries = Vec::new();
                while let Some(entry) = map.next_entry()? {
                    entries.push(entry);
                }
                Ok(OrderedEntries(entries))
            }
        }
        deserializer.deserialize_map(EntriesVisitor)
    }
}

/// Parses a catalog document: a JSON object mapping qualified names to
/// definitions. Unknown fields are ignored.
pub fn load_catalog(document: &str) -> Result<ApiCatalog, CatalogError> {
    let OrderedEntries(entries) = serde_json::from_str(document)?;
    let mut seen = HashSet::new();
    let mut definitions = Vec::with_capacity(entries.len());
    for (key, value) in entries {
        if !seen.insert(key.clone()) {
            return Err(CatalogError::Duplicate(key));
        }
        let def: FunctionDefinition = serde_json::from_value(value).map_err(|e| CatalogError::Schema {
            entry: key.clone(),
            message: e.to_string(),
        })?;
        if def.function_name != key {
            return Err(CatalogError::Schema {
                message: format!("FunctionName `{}` does not match its key", def.function_name),
                entry: key,
            });
        }
        definitions.push(def);
    }
    ApiCatalog::from_definitions(definitions)
}

pub fn load_catalog_file(path: impl AsRef<Path>) -> Result<ApiCatalog, CatalogError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_catalog(&text)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationResult {
    /// Distinct unknown function names, first appearance first.
    pub made_up_functions: Vec<String>,
    /// `(function, key)` pairs for known functions only.
    pub made_up_parameters: Vec<(String, String)>,
}

impl ValidationResult {
    pub fn is_clean(&self) -> bool {
        self.made_up_functions.is_empty() && self.made_up_parameters.is_empty()
    }
}

/// Checks every call in `flow` against the catalog. Only top-level argument
/// keys are inspected.
pub fn validate_flow(flow: &Flow, catalog: &ApiCatalog) -> ValidationResult {
    let mut result = ValidationResult::default();
    for call in flow.api_calls() {
        let name = call.qualified_name();
        match catalog.get(name) {
            None => {
                if !result.made_up_functions.iter().any(|n| n == name) {
                    result.made_up_functions.push(name.to_string());
                }
            }
            Some(def) => {
                for key in call.arguments().keys() {
                    if def.accepts_key(key) {
                        continue;
                    }
                    let pair = (name.to_string(), key.to_string());
                    if !result.made_up_parameters.contains(&pair) {
                        result.made_up_parameters.push(pair);
                    }
                }
            }
        }
    }
    result
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Text block describing one function, as inserted into prompts.
pub fn render_function_definition(def: &FunctionDefinition) -> String {
    let mut out = format!("{}\nDescription: {}", def.function_name, one_line(&def.description));
    if !def.parameters.is_empty() {
        out.push_str("\nParameters:");
        for p in &def.parameters {
            out.push_str(&format!(
                "\n  {} ({}): {}",
                p.key,
                one_line(&p.type_name),
                one_line(&p.description)
            ));
        }
    }
    out
}
