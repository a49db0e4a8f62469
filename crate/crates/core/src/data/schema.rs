use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Descriptor of the PAMAP2 protocol recordings (accelerometer ±16g and
/// gyroscope of the hand, chest and ankle IMUs; 12 protocol activities).
pub const PAMAP2_SCHEMA_JSON: &str = include_str!("../../schemas/pamap2.schema.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum ColumnRole {
    Timestamp,
    Label,
    Channel { sensor: String, axis: String },
    Ignore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub index: usize,
    #[serde(flatten)]
    pub role: ColumnRole,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub raw: String,
    pub class: usize,
    #[serde(default)]
    pub name: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullPolicy {
    /// Null samples keep their vocabulary class and are trained on like any other.
    Keep,
    /// Windows labelled null are discarded.
    #[default]
    Drop,
}

/// Benchmark defaults shipped with a schema.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSetup {
    #[serde(default)]
    pub test_subjects: Vec<String>,
    #[serde(default = "one")]
    pub keep_every: usize,
    #[serde(default = "half")]
    pub overlap: f64,
}

fn one() -> usize {
    1
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub name: String,
    /// A single space means "any run of whitespace".
    pub delimiter: char,
    pub columns: Vec<ColumnSpec>,
    pub label_vocabulary: Vec<LabelEntry>,
    /// Raw label marking "no relevant activity"; unknown labels map here too.
    #[serde(default)]
    pub null_label: Option<String>,
    #[serde(default)]
    pub null_policy: NullPolicy,
    pub sampling_rate_hz: f64,
    #[serde(default)]
    pub benchmark: BenchmarkSetup,
}

impl DatasetSchema {
    pub fn from_json(text: &str) -> Result<Self> {
        let schema: DatasetSchema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn pamap2() -> Self {
        Self::from_json(PAMAP2_SCHEMA_JSON).expect("shipped schema is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let labels = self.columns.iter().filter(|c| c.role == ColumnRole::Label).count();
        if labels != 1 {
            return Err(Error::Config(format!("schema {}: expected one label column, found {labels}", self.name)));
        }
        if self.channel_count() == 0 {
            return Err(Error::Config(format!("schema {}: no channel columns", self.name)));
        }
        if !(self.sampling_rate_hz > 0.0) {
            return Err(Error::Config(format!("schema {}: sampling rate must be positive", self.name)));
        }
        let mut seen = vec![false; self.label_vocabulary.len()];
        for entry in &self.label_vocabulary {
            match seen.get_mut(entry.class) {
                Some(slot) => *slot = true,
                None => {
                    return Err(Error::Config(format!(
                        "schema {}: class indices must be dense 0..{}, got {}",
                        self.name,
                        self.label_vocabulary.len(),
                        entry.class
                    )))
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config(format!("schema {}: duplicate class indices", self.name)));
        }
        if self.null_policy == NullPolicy::Keep {
            let in_vocab = self
                .null_label
                .as_ref()
                .is_some_and(|n| self.label_vocabulary.iter().any(|e| &e.raw == n));
            if !in_vocab {
                return Err(Error::Config(format!(
                    "schema {}: null policy 'keep' needs the null label in the vocabulary",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.label_vocabulary.len()
    }

    pub fn channel_count(&self) -> usize {
        self.channel_columns().count()
    }

    pub(crate) fn channel_columns(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| matches!(c.role, ColumnRole::Channel { .. }))
    }

    pub(crate) fn label_column(&self) -> usize {
        self.columns
            .iter()
            .find(|c| c.role == ColumnRole::Label)
            .map(|c| c.index)
            .expect("validated")
    }

    /// Channel descriptors such as `hand-accel-x`, in column order.
    pub fn sensor_names(&self) -> Vec<String> {
        self.channel_columns()
            .map(|c| match &c.role {
                ColumnRole::Channel { sensor, axis } if axis.is_empty() => sensor.clone(),
                ColumnRole::Channel { sensor, axis } => format!("{sensor}-{axis}"),
                _ => unreachable!(),
            })
            .collect()
    }

    pub fn class_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.num_classes()];
        for e in &self.label_vocabulary {
            names[e.class] = if e.name.is_empty() { e.raw.clone() } else { e.name.clone() };
        }
        names
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("schema serialises");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_pamap2_schema() {
        let s = DatasetSchema::pamap2();
        assert_eq!(s.num_classes(), 12);
        assert_eq!(s.channel_count(), 18);
        assert_eq!(s.sampling_rate_hz, 100.0);
        assert_eq!(s.benchmark.test_subjects, vec!["subject106".to_string()]);
        assert_eq!(s.benchmark.keep_every, 3);
        assert_eq!(s.benchmark.overlap, 0.5);
        let names = s.sensor_names();
        assert_eq!(names[0], "hand-accel-x");
        assert_eq!(names[17], "ankle-gyro-z");
    }

    #[test]
    fn rejects_two_label_columns() {
        let mut s = DatasetSchema::pamap2();
        s.columns.push(ColumnSpec { index: 2, role: ColumnRole::Label });
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_sparse_classes() {
        let mut s = DatasetSchema::pamap2();
        s.label_vocabulary[0].class = 40;
        assert!(s.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = DatasetSchema::pamap2();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.sampling_rate_hz = 50.0;
        assert_ne!(a.hash(), b.hash());
    }
}
