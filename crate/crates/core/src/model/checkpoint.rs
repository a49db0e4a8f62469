use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::init_params;
use super::HarModel;
use crate::error::{Error, Result};
use crate::io::{read_file, sha256_hex, write_atomic};
use crate::numerics::{Rng, Tensor};

pub const MANIFEST_FILE: &str = "checkpoint.json";
pub const TENSORS_FILE: &str = "checkpoint.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    seed: u64,
    tensors: Vec<TensorEntry>,
    sha256: String,
    #[serde(default)]
    metadata: serde_json::Value,
}

/// A loaded checkpoint: the model plus whatever training metadata was saved.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: HarModel,
    pub seed: u64,
    pub metadata: serde_json::Value,
}

/// Writes `checkpoint.json` (config, seed, tensor table, checksum, metadata)
/// and `checkpoint.bin` (concatenated tensor dumps in canonical order).
pub fn save_checkpoint(dir: &Path, model: &HarModel, seed: u64, metadata: serde_json::Value) -> Result<()> {
    let flat = model.params.flatten();
    let mut bytes = Vec::new();
    for (_, t) in &flat {
        t.write_to(&mut bytes).expect("in-memory write");
    }
    let manifest = Manifest {
        config: model.config.clone(),
        seed,
        tensors: flat
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        sha256: sha256_hex(&bytes),
        metadata,
    };
    write_atomic(&dir.join(TENSORS_FILE), &bytes)?;
    write_atomic(&dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest)?)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest: Manifest = serde_json::from_slice(&read_file(&dir.join(MANIFEST_FILE))?)
        .map_err(|e| Error::Integrity(format!("{MANIFEST_FILE}: {e}")))?;
    let bytes = read_file(&dir.join(TENSORS_FILE))?;
    if sha256_hex(&bytes) != manifest.sha256 {
        return Err(Error::Integrity(format!("{TENSORS_FILE} does not match the manifest checksum")));
    }
    manifest.config.validate()?;
    let mut reader = bytes.as_slice();
    let mut flat = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let t = Tensor::read_from(&mut reader)?;
        if t.shape() != entry.shape.as_slice() {
            return Err(Error::Integrity(format!("tensor {} has shape {:?}, manifest says {:?}", entry.name, t.shape(), entry.shape)));
        }
        flat.push((entry.name.clone(), t));
    }
    if !reader.is_empty() {
        return Err(Error::Integrity(format!("{TENSORS_FILE} has trailing bytes")));
    }
    // Layout comes from the config; values are then replaced wholesale.
    let mut params = init_params(&manifest.config, &mut Rng::new(0))?;
    params.load_flat(flat)?;
    Ok(Checkpoint {
        model: HarModel {
            config: manifest.config,
            params,
        },
        seed: manifest.seed,
        metadata: manifest.metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> HarModel {
        let cfg = ModelConfig {
            window_len: 4,
            channels: 2,
            classes: 3,
            d_model: 8,
            n_blocks: 1,
            n_heads: 2,
            k_filters: 2,
            ..Default::default()
        };
        HarModel::new(cfg, 17).unwrap()
    }

    #[test]
    fn roundtrip_gives_bit_identical_logits() {
        let dir = tempfile::tempdir().unwrap();
        let m = model();
        save_checkpoint(dir.path(), &m, 17, serde_json::json!({"best_epoch": 3})).unwrap();
        let ck = load_checkpoint(dir.path()).unwrap();
        assert_eq!(ck.model, m);
        assert_eq!(ck.seed, 17);
        assert_eq!(ck.metadata["best_epoch"], 3);
        let x = Tensor::from_fn(&[4, 2], |i| i as f64 - 3.5);
        let a = m.infer(&x).unwrap().logits;
        let b = ck.model.infer(&x).unwrap().logits;
        assert!(a.data().iter().zip(b.data()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn flipped_byte_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &model(), 1, serde_json::Value::Null).unwrap();
        let path = dir.path().join(TENSORS_FILE);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[100] ^= 1;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Integrity(_))));
    }

    #[test]
    fn garbled_manifest_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &model(), 1, serde_json::Value::Null).unwrap();
        std::fs::write(dir.path().join(MANIFEST_FILE), b"{not json").unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Integrity(_))));
    }
}
