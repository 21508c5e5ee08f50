//! Merging a JSON config file with command-line flags.
//!
//! Every subcommand's arguments are a flat struct of optional fields that
//! doubles as the config-file schema. File values fill in whatever the flags
//! leave unset; keys the struct does not know are rejected.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::CliError;

/// Keys allowed in a config file besides the subcommand's own fields.
const GLOBAL_KEYS: [&str; 1] = ["seed"];

pub struct FileConfig {
    fields: Map<String, Value>,
}

impl FileConfig {
    pub fn empty() -> Self {
        FileConfig { fields: Map::new() }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(fields)) => Ok(FileConfig { fields }),
            Ok(_) => Err(CliError::Invalid(format!("config {} must hold a JSON object", path.display()))),
            Err(e) => Err(CliError::Invalid(format!("config {}: {e}", path.display()))),
        }
    }

    pub fn seed(&self) -> Result<Option<u64>, CliError> {
        match self.fields.get("seed") {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| CliError::Invalid(format!("config seed must be a non-negative integer, got {v}"))),
        }
    }

    /// `flags` with unset fields taken from the file.
    pub fn resolve<T>(&self, flags: &T) -> Result<T, CliError>
    where
        T: Serialize + DeserializeOwned + Default,
    {
        let Value::Object(known) = to_value(&T::default())? else {
            unreachable!("argument structs serialize to objects")
        };
        let mut merged = Map::new();
        for (k, v) in &self.fields {
            if GLOBAL_KEYS.contains(&k.as_str()) {
                continue;
            }
            if !known.contains_key(k) {
                return Err(CliError::Invalid(format!("unknown config field `{k}`")));
            }
            merged.insert(k.clone(), v.clone());
        }
        let Value::Object(set) = to_value(flags)? else { unreachable!() };
        for (k, v) in set {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
        serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Invalid(format!("config: {e}")))
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Invalid(e.to_string()))
}
