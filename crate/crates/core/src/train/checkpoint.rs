use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::ctc::GlossVocab;
use crate::error::Result;
use crate::io;
use crate::net::{Model, ModelConfig};

/// JSON sidecar written next to the tensor file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub vocab: GlossVocab,
    pub train: TrainConfig,
    /// 1-based epoch the weights come from.
    pub epoch: usize,
    pub dev_wer: f64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `<path>` (tensor container) and `<path>.json` (sidecar).
pub fn save_checkpoint(path: &Path, model: &Model, meta: &CheckpointMeta) -> Result<()> {
    let tensors: Vec<(&str, &crate::ndgrad::Array)> = model
        .params
        .names()
        .iter()
        .map(String::as_str)
        .zip(model.params.values())
        .collect();
    io::write_tensors(path, &tensors)?;
    io::write_json(&sidecar_path(path), meta)
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let meta: CheckpointMeta = io::read_json(&sidecar_path(path))?;
    let mut model = Model::new(meta.model.clone(), meta.vocab.clone())?;
    model.params.load(io::read_tensors(path)?)?;
    Ok((model, meta))
}
