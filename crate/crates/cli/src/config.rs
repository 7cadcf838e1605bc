//! Configuration layering (defaults < `--config` file < explicit flags),
//! error classification, and the `run.json` record.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use t2vqa_core::data::ManifestError;
use t2vqa_core::eval::{AnalysisError, EvalError, FitError, MetricError, SplitError};
use t2vqa_core::model::ModelError;
use t2vqa_core::prompts::PromptError;
use t2vqa_core::study::StudyError;
use t2vqa_core::training::TrainError;
use t2vqa_service::StoreError;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or input data; exit code 1.
    Validation(String),
    /// Failure while doing the work; exit code 2.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

pub fn invalid(msg: impl fmt::Display) -> CliError {
    CliError::Validation(msg.to_string())
}

pub fn runtime(msg: impl fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

/// Missing inputs are the caller's fault; any other I/O failure is runtime.
pub fn io_error(path: &Path, e: std::io::Error) -> CliError {
    let msg = format!("{}: {e}", path.display());
    if e.kind() == std::io::ErrorKind::NotFound {
        CliError::Validation(msg)
    } else {
        CliError::Runtime(msg)
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        match e {
            ManifestError::Io { path, source } => io_error(&path, source),
            other => invalid(format!("manifest: {other}")),
        }
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        invalid(e)
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        invalid(e)
    }
}

impl From<SplitError> for CliError {
    fn from(e: SplitError) -> Self {
        invalid(e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) => invalid(e),
            ModelError::Checkpoint { .. } => invalid(e),
            _ => runtime(e),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_)
            | TrainError::TooFewSamples(_)
            | TrainError::UnknownVideo(_)
            | TrainError::MissingMos(_) => invalid(e),
            TrainError::Model(m) => m.into(),
            _ => runtime(e),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::MissingMos(_) | EvalError::UnknownVideos(_) | EvalError::NoFolds => invalid(e),
            // folds too small to evaluate are a split-plan problem
            EvalError::Fit { source: FitError::TooFewPoints(_), .. }
            | EvalError::Metric { source: MetricError::TooFewSamples { .. }, .. } => invalid(e),
            _ => runtime(e),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::MissingMos(_) | AnalysisError::TooFewPoints(_) => invalid(e),
            _ => runtime(e),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { path, source } => io_error(&path, source),
            other => invalid(other),
        }
    }
}

/// Explicitly given flags, keyed by (possibly dotted) config paths.
#[derive(Default)]
pub struct Overlay(Map<String, Value>);

impl Overlay {
    pub fn set<T: Serialize>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            let v = serde_json::to_value(v).expect("flag values serialize");
            let mut parts: Vec<&str> = key.split('.').collect();
            let last = parts.pop().expect("non-empty key");
            let mut map = &mut self.0;
            for p in parts {
                map = map
                    .entry(p.to_string())
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("overlay nesting is object-only");
            }
            map.insert(last.to_string(), v);
        }
        self
    }
}

fn merge(base: &mut Value, top: &Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, t) => *b = t.clone(),
    }
}

/// Layers the config file and the flags over `defaults`. Unknown keys in the
/// config file are rejected by the target type.
pub fn resolve<T: Serialize + DeserializeOwned>(
    defaults: T,
    file: Option<&Value>,
    flags: Overlay,
) -> Result<T, CliError> {
    let mut v = serde_json::to_value(defaults).expect("defaults serialize");
    if let Some(f) = file {
        merge(&mut v, f);
    }
    merge(&mut v, &Value::Object(flags.0));
    serde_json::from_value(v).map_err(|e| invalid(format!("configuration: {e}")))
}

pub fn load_config_file(path: Option<&Path>) -> Result<Option<Value>, CliError> {
    let Some(path) = path else { return Ok(None) };
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    if !v.is_object() {
        return Err(invalid(format!("{}: configuration must be a JSON object", path.display())));
    }
    Ok(Some(v))
}

pub fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(crate::SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| invalid(format!("{} must be an unsigned integer, got {s:?}", crate::SEED_ENV))),
        Err(_) => Ok(None),
    }
}

/// `--manifest`, or `$T2VQA_DATA/manifest.jsonl`.
pub fn default_manifest() -> Option<PathBuf> {
    std::env::var_os(crate::DATA_ENV).map(|d| PathBuf::from(d).join("manifest.jsonl"))
}

pub fn require_path(p: &Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    p.clone().ok_or_else(|| invalid(format!("missing required --{flag}")))
}

/// Refuses to write over an input file.
pub fn ensure_distinct(input: &Path, output: &Path) -> Result<(), CliError> {
    let same = match (input.canonicalize(), output.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if same {
        return Err(invalid(format!("refusing to overwrite input {} in place", input.display())));
    }
    Ok(())
}

pub fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    create_dir(&parent_dir(path))?;
    std::fs::write(path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    write_file(path, &bytes)
}

#[derive(Serialize)]
struct RunRecord<'a, T> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a T,
}

/// Writes `dir/run.json`. No timestamps, so identical runs give identical bytes.
pub fn write_run_json<T: Serialize>(dir: &Path, command: &str, config: &T) -> Result<(), CliError> {
    let record = RunRecord { tool: "t2vqa", version: env!("CARGO_PKG_VERSION"), command, config };
    write_json(&dir.join("run.json"), &record)
}
