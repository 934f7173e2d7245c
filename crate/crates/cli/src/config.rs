//! Option files, default tracking and the `run.json` record.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::{validation, CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

pub fn hash_file(path: &Path) -> CliResult<InputFile> {
    let mut f = File::open(path).map_err(|e| CliError::Validation(format!("cannot open {}: {e}", path.display())))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(InputFile { path: path.display().to_string(), sha256: hex::encode(h.finalize()) })
}

/// Overlays the non-null fields of `flags` on the option file at `path`.
///
/// Keys may be written in snake or kebab case. A `run.json` is accepted too;
/// its `config` object is used.
pub fn merge<T: Serialize + DeserializeOwned>(flags: T, path: Option<&Path>) -> CliResult<(T, Option<InputFile>)> {
    let mut base = Map::new();
    let mut hash = None;
    if let Some(p) = path {
        let text = std::fs::read_to_string(p)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))?;
        let obj = match v {
            Value::Object(mut o) if o.contains_key("command") && o.contains_key("config") => match o.remove("config") {
                Some(Value::Object(c)) => c,
                _ => return validation(format!("config {}: `config` is not an object", p.display())),
            },
            Value::Object(o) => o,
            _ => return validation(format!("config {} must hold a JSON object", p.display())),
        };
        base = obj.into_iter().map(|(k, v)| (k.replace('-', "_"), v)).collect();
        hash = Some(hash_file(p)?);
    }
    let over = serde_json::to_value(&flags).map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Value::Object(o) = over {
        for (k, v) in o {
            let empty = v.is_null() || v.as_array().is_some_and(|a| a.is_empty());
            if !empty {
                base.insert(k, v);
            }
        }
    }
    let merged = serde_json::from_value(Value::Object(base)).map_err(|e| match path {
        Some(p) => CliError::Validation(format!("config {}: {e}", p.display())),
        None => CliError::Validation(e.to_string()),
    })?;
    Ok((merged, hash))
}

/// Where a defaulted value comes from.
#[derive(Debug, Clone, Copy)]
pub enum Provenance {
    /// A choice of this tool, not a measured value.
    ToolDefault,
    /// Taken from the published measurement this tool models.
    Paper,
    /// Computed from an input, e.g. a rate read from the model file.
    Input,
}

impl Provenance {
    fn as_str(self) -> &'static str {
        match self {
            Provenance::ToolDefault => "tool-default",
            Provenance::Paper => "paper",
            Provenance::Input => "input",
        }
    }
}

/// Resolves options and records every value in the run record.
#[derive(Debug, Default)]
pub struct Resolver {
    config: Map<String, Value>,
    defaults: Map<String, Value>,
}

impl Resolver {
    pub fn value<T: Serialize>(&mut self, name: &str, given: Option<T>, default: T, prov: Provenance) -> T {
        let v = match given {
            Some(v) => v,
            None => {
                self.defaults.insert(
                    name.into(),
                    serde_json::json!({ "value": to_json(&default), "provenance": prov.as_str() }),
                );
                default
            }
        };
        self.config.insert(name.into(), to_json(&v));
        v
    }

    /// A value with no default.
    pub fn set<T: Serialize>(&mut self, name: &str, v: &T) {
        self.config.insert(name.into(), to_json(v));
    }

    pub fn required<T: Serialize>(&mut self, name: &str, given: Option<T>) -> CliResult<T> {
        match given {
            Some(v) => {
                self.set(name, &v);
                Ok(v)
            }
            None => validation(format!("--{} is required", name.replace('_', "-"))),
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Everything needed to repeat a run.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Map<String, Value>,
    pub defaults: Map<String, Value>,
    pub inputs: BTreeMap<String, InputFile>,
    pub outputs: Vec<String>,
    pub results: Value,
}

impl RunRecord {
    pub fn new(command: &str, resolver: Resolver) -> Self {
        RunRecord {
            tool: env!("CARGO_PKG_NAME").replace("-cli", ""),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: resolver.config,
            defaults: resolver.defaults,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            results: Value::Null,
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> CliResult<()> {
        self.inputs.insert(role.into(), hash_file(path)?);
        Ok(())
    }

    pub fn config_file(&mut self, hash: Option<InputFile>) {
        if let Some(h) = hash {
            self.inputs.insert("config".into(), h);
        }
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join("run.json");
        let f = create(&path)?;
        serde_json::to_writer_pretty(BufWriter::new(f), self).map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(path)
    }
}

pub fn create(path: &Path) -> CliResult<File> {
    File::create(path).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}
