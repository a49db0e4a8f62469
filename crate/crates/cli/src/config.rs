//! Experiment configuration: one JSON file plus dotted-path overrides.

use std::path::{Path, PathBuf};

use har_core::data::{DatasetSchema, Labeling, NullPolicy, SplitPlan};
use har_core::eval::Experiment;
use har_core::io::read_file;
use har_core::model::ModelConfig;
use har_core::train::TrainRunConfig;
use har_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const BUILTIN_PAMAP2: &str = "builtin:pamap2";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Schema JSON path, or `builtin:pamap2`.
    pub schema: String,
    /// Recording files, or directories whose files are all recordings.
    pub data: Vec<String>,
    pub preprocess: PreprocessConfig,
    pub window: WindowConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub train: TrainRunConfig,
    pub output: String,
    /// Fill the history's `wall_time` column. Off keeps reruns byte-identical.
    pub record_wall_time: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Defaults to the schema's benchmark setting.
    pub keep_every: Option<usize>,
    pub normalize: bool,
    /// Defaults to the schema's policy.
    pub null_policy: Option<NullPolicy>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    /// Defaults to the schema's benchmark setting.
    pub overlap: Option<f64>,
    pub labeling: Labeling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Defaults to the schema's benchmark test subjects.
    pub test_subjects: Option<Vec<String>>,
    pub val_fraction: f64,
    /// Contiguous per-recording fractions instead of held-out subjects.
    pub fractions: Option<Fractions>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fractions {
    pub train: f64,
    pub val: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema: String::new(),
            data: Vec::new(),
            preprocess: PreprocessConfig::default(),
            window: WindowConfig::default(),
            split: SplitConfig::default(),
            model: ModelConfig::default(),
            train: TrainRunConfig::default(),
            output: "runs/experiment".into(),
            record_wall_time: false,
        }
    }
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            keep_every: None,
            normalize: true,
            null_policy: None,
        }
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_subjects: None,
            val_fraction: 0.1,
            fractions: None,
        }
    }
}

/// A fully resolved configuration with its schema loaded.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub schema: DatasetSchema,
}

/// Command-line adjustments applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Sets `path` (dot separated) in `root`, creating objects on the way. The
/// value is parsed as JSON when possible, otherwise taken as a string.
pub fn apply_set(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not of the form key=value")))?;
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override {assignment:?} has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Map::new());
            } else {
                return Err(Error::Config(format!("override {path}: {} is not an object", keys[..i].join("."))));
            }
        }
        let map = node.as_object_mut().expect("object");
        if i + 1 == keys.len() {
            map.insert(key.to_string(), value);
            return Ok(());
        }
        node = map.entry(key.to_string()).or_insert(Value::Null);
    }
    unreachable!()
}

fn absolute(base: &Path, p: &str) -> String {
    if p.is_empty() || p == BUILTIN_PAMAP2 || Path::new(p).is_absolute() {
        p.to_string()
    } else {
        base.join(p).display().to_string()
    }
}

pub fn load_schema(spec: &str) -> Result<DatasetSchema> {
    match spec {
        "" => Err(Error::Config("no schema given (set `schema` to a schema file or builtin:pamap2)".into())),
        BUILTIN_PAMAP2 => Ok(DatasetSchema::pamap2()),
        path => {
            let bytes = read_file(Path::new(path))?;
            let text = String::from_utf8(bytes).map_err(|_| Error::Config(format!("{path}: schema is not UTF-8")))?;
            DatasetSchema::from_json(&text).map_err(|e| match e {
                Error::Json(j) => Error::Config(format!("{path}: {j}")),
                other => other,
            })
        }
    }
}

/// Reads the config file (if any), applies overrides, resolves relative paths
/// against the config file's directory, fills schema-derived defaults and
/// checks cross-field consistency.
pub fn resolve(config_path: Option<&Path>, overrides: &Overrides) -> Result<Resolved> {
    let (mut root, base) = match config_path {
        Some(p) => {
            let bytes = read_file(p)?;
            let v: Value = serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).map_or_else(|| PathBuf::from("."), Path::to_path_buf);
            (v, dir)
        }
        None => (Value::Object(Map::new()), PathBuf::from(".")),
    };
    if !root.is_object() {
        return Err(Error::Config("config must be a JSON object".into()));
    }
    for s in &overrides.sets {
        apply_set(&mut root, s)?;
    }
    let mut config: ExperimentConfig = serde_json::from_value(root.clone()).map_err(|e| Error::Config(e.to_string()))?;
    let base = std::path::absolute(&base).map_err(|e| Error::io(base.display(), e))?;
    config.schema = absolute(&base, &config.schema);
    config.data = config.data.iter().map(|d| absolute(&base, d)).collect();
    config.output = match &overrides.out {
        Some(out) => std::path::absolute(out).map_err(|e| Error::io(out.display(), e))?.display().to_string(),
        None => absolute(&base, &config.output),
    };
    if let Some(seed) = overrides.seed {
        config.train.seed = seed;
    }
    let schema = load_schema(&config.schema)?;

    // Channel and class counts come from the schema unless given explicitly.
    let model = root.get("model");
    let given = |k: &str| model.and_then(|m| m.get(k)).is_some();
    if !given("channels") {
        config.model.channels = schema.channel_count();
    }
    if !given("classes") {
        config.model.classes = schema.num_classes();
    }
    let bench = &schema.benchmark;
    config.preprocess.keep_every.get_or_insert(bench.keep_every);
    config.preprocess.null_policy.get_or_insert(schema.null_policy);
    config.window.overlap.get_or_insert(bench.overlap);
    if config.split.fractions.is_none() && config.split.test_subjects.is_none() {
        config.split.test_subjects = Some(bench.test_subjects.clone());
    }
    validate(&config, &schema)?;
    Ok(Resolved { config, schema })
}

fn validate(c: &ExperimentConfig, schema: &DatasetSchema) -> Result<()> {
    c.model.validate()?;
    c.train.validate()?;
    let bad = |m: String| Err(Error::Config(m));
    if c.model.channels != schema.channel_count() {
        return bad(format!("model.channels is {} but schema {} has {} channels", c.model.channels, schema.name, schema.channel_count()));
    }
    if c.model.classes != schema.num_classes() {
        return bad(format!("model.classes is {} but schema {} has {} classes", c.model.classes, schema.name, schema.num_classes()));
    }
    if c.preprocess.keep_every == Some(0) {
        return bad("preprocess.keep_every must be at least 1".into());
    }
    let overlap = c.window.overlap.expect("filled");
    if !(0.0..1.0).contains(&overlap) {
        return bad(format!("window.overlap must be in [0, 1), got {overlap}"));
    }
    if !(0.0..1.0).contains(&c.split.val_fraction) {
        return bad(format!("split.val_fraction must be in [0, 1), got {}", c.split.val_fraction));
    }
    if let Some(f) = c.split.fractions {
        if c.split.test_subjects.is_some() {
            return bad("split.fractions and split.test_subjects are mutually exclusive".into());
        }
        if f.train <= 0.0 || f.val < 0.0 || f.train + f.val >= 1.0 {
            return bad(format!("split.fractions must leave a non-empty train and test part, got {f:?}"));
        }
    }
    if c.output.is_empty() {
        return bad("output directory is empty".into());
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn experiment(&self) -> Experiment {
        Experiment {
            model: self.model.clone(),
            train: self.train.clone(),
            overlap: self.window.overlap.expect("resolved"),
            labeling: self.window.labeling,
            null_policy: self.preprocess.null_policy.expect("resolved"),
            normalize: self.preprocess.normalize,
            val_fraction: self.split.val_fraction,
        }
    }

    /// The benchmark split plan; an empty test-subject list is an error.
    pub fn split_plan(&self) -> Result<SplitPlan> {
        if let Some(f) = self.split.fractions {
            return Ok(SplitPlan::Fractions { train: f.train, val: f.val });
        }
        let test = self.split.test_subjects.clone().unwrap_or_default();
        if test.is_empty() {
            return Err(Error::Config("no test subjects: set split.test_subjects or split.fractions".into()));
        }
        Ok(SplitPlan::Subjects {
            test: test.into_iter().collect(),
            val_fraction: self.split.val_fraction,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }
}
