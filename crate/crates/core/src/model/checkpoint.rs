//! Single-file checkpoints: config, per-group frozen flags, and named tensors
//! stored as base64 little-endian `f64` so reloads are bit-exact.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::QualityModel;
use super::params::Group;
use super::tensor::Matrix;
use super::ModelError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct GroupEntry {
    name: String,
    frozen: bool,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    group: String,
    shape: [usize; 2],
    data: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    config: ModelConfig,
    groups: Vec<GroupEntry>,
    params: Vec<TensorEntry>,
}

pub fn save_checkpoint(model: &QualityModel, path: &Path) -> Result<(), ModelError> {
    let store = model.store();
    let file = CheckpointFile {
        format_version: CHECKPOINT_VERSION,
        config: model.config().clone(),
        groups: store
            .frozen_flags()
            .iter()
            .map(|(g, f)| GroupEntry { name: g.name().to_string(), frozen: *f })
            .collect(),
        params: store
            .iter()
            .map(|(_, p)| TensorEntry {
                name: p.name.clone(),
                group: p.group.name().to_string(),
                shape: [p.value.rows(), p.value.cols()],
                data: STANDARD.encode(p.value.to_le_bytes()),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&file).expect("checkpoint serializes");
    std::fs::write(path, json).map_err(|e| ModelError::Checkpoint { path: path.to_path_buf(), message: e.to_string() })
}

pub fn load_checkpoint(path: &Path) -> Result<QualityModel, ModelError> {
    let fail = |message: String| ModelError::Checkpoint { path: path.to_path_buf(), message };
    let bytes = std::fs::read(path).map_err(|e| fail(e.to_string()))?;
    let file: CheckpointFile = serde_json::from_slice(&bytes).map_err(|e| fail(e.to_string()))?;
    if file.format_version != CHECKPOINT_VERSION {
        return Err(fail(format!("unsupported format_version {}", file.format_version)));
    }
    let mut model = QualityModel::new(file.config)?;
    if file.params.len() != model.store().len() {
        return Err(fail(format!("expected {} tensors, found {}", model.store().len(), file.params.len())));
    }
    for entry in &file.groups {
        let group = Group::from_name(&entry.name).ok_or_else(|| fail(format!("unknown group {:?}", entry.name)))?;
        model.store_mut().set_frozen(group, entry.frozen);
    }
    for entry in file.params {
        let id = model.store().find(&entry.name).ok_or_else(|| fail(format!("unknown tensor {:?}", entry.name)))?;
        let param = model.store().param(id);
        if param.group.name() != entry.group {
            return Err(fail(format!("tensor {:?} stored under group {:?}", entry.name, entry.group)));
        }
        let expected = param.value.shape();
        if (entry.shape[0], entry.shape[1]) != expected {
            return Err(fail(format!("tensor {:?} has shape {:?}, expected {:?}", entry.name, entry.shape, expected)));
        }
        let raw = STANDARD.decode(&entry.data).map_err(|e| fail(e.to_string()))?;
        if raw.len() != expected.0 * expected.1 * 8 {
            return Err(fail(format!("tensor {:?} has {} data bytes", entry.name, raw.len())));
        }
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        *model.store_mut().value_mut(id) = Matrix::from_vec(expected.0, expected.1, data);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let cfg = ModelConfig { n_fusion_blocks: 1, n_decoder_layers: 1, ..ModelConfig::toy() };
        let mut model = QualityModel::new(cfg).unwrap();
        *model.level_bias_mut(2) = 0.123_456_789_012_345_67;
        model.store_mut().set_frozen(Group::Fusion, true);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.store(), model.store());
        assert_eq!(back.config(), model.config());
    }

    #[test]
    fn rejects_wrong_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let model = QualityModel::new(ModelConfig::toy()).unwrap();
        save_checkpoint(&model, &path).unwrap();
        let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        v["format_version"] = 99.into();
        std::fs::write(&path, v.to_string()).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(ModelError::Checkpoint { .. })));
    }
}
