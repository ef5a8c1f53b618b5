//! Single-file checkpoints: the magic `FORMCKPT`, a little-endian `u64`
//! manifest length, a JSON manifest mapping each parameter to its shape,
//! dtype and byte offset, then one contiguous little-endian `f32` payload.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{FormError, Result};
use crate::model::{FormModel, ModelConfig, Parameters};

const MAGIC: &[u8; 8] = b"FORMCKPT";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamEntry {
    pub shape: [usize; 2],
    pub dtype: String,
    pub byte_offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: ModelConfig,
    pub params: BTreeMap<String, ParamEntry>,
}

/// Writes `model`. Values are stored as `f32`; parameters that are already
/// `f32`-representable reload bit-identically.
pub fn save(path: &Path, model: &FormModel) -> Result<()> {
    let mut params = BTreeMap::new();
    let mut payload = Vec::with_capacity(model.params.num_scalars() * 4);
    for (name, value) in model.params.iter() {
        params.insert(
            name.to_string(),
            ParamEntry {
                shape: [value.nrows(), value.ncols()],
                dtype: "float32".into(),
                byte_offset: payload.len(),
            },
        );
        for v in value.iter() {
            payload.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: "form-checkpoint-v1".into(),
        config: model.config,
        params,
    };
    let manifest = serde_json::to_vec(&manifest)?;
    let tmp = path.with_extension("ckpt.tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| FormError::io(&tmp, e))?;
    f.write_all(MAGIC)
        .and_then(|_| f.write_all(&(manifest.len() as u64).to_le_bytes()))
        .and_then(|_| f.write_all(&manifest))
        .and_then(|_| f.write_all(&payload))
        .map_err(|e| FormError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| FormError::io(path, e))
}

pub fn read_manifest(bytes: &[u8], path: &Path) -> Result<(Manifest, usize)> {
    let bad = |message: &str| FormError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    };
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing checkpoint magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let end = 16usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated manifest"))?;
    Ok((serde_json::from_slice(&bytes[16..end])?, end))
}

/// Loads a checkpoint using the configuration stored in it.
pub fn load(path: &Path) -> Result<FormModel> {
    let bytes = fs::read(path).map_err(|e| FormError::io(path, e))?;
    let (manifest, start) = read_manifest(&bytes, path)?;
    let payload = &bytes[start..];
    let mut entries = BTreeMap::new();
    for (name, entry) in &manifest.params {
        if entry.dtype != "float32" {
            return Err(FormError::CheckpointMismatch {
                name: name.clone(),
                message: format!("unsupported dtype {}", entry.dtype),
            });
        }
        let [rows, cols] = entry.shape;
        let end = entry.byte_offset + rows * cols * 4;
        let raw = payload
            .get(entry.byte_offset..end)
            .ok_or_else(|| FormError::CheckpointMismatch {
                name: name.clone(),
                message: "payload out of bounds".into(),
            })?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        entries.insert(
            name.clone(),
            Array2::from_shape_vec((rows, cols), values).expect("length checked"),
        );
    }
    FormModel::from_parameters(manifest.config, Parameters::from_entries(entries))
}

/// Loads a checkpoint and checks its parameters against `expected`.
pub fn load_for(path: &Path, expected: &ModelConfig) -> Result<FormModel> {
    let model = load(path)?;
    model.params.check_against(expected)?;
    Ok(FormModel {
        config: *expected,
        params: model.params,
    })
}
