//! Adapter over features extracted offline by the external pretrained
//! encoders.
//!
//! Artifact directory layout:
//!
//! ```text
//! manifest.json            {"adapter_id": str, "text_dim": int, "image_dim": int}
//! text/pad.f32             the [PAD] embedding, text_dim floats
//! text/<sha256(text)>.f32  token hidden states, [CLS] first, one token after another
//! objects/<sha256(bytes)>.f32  detected-object features, one object after another
//! ```
//!
//! All `.f32` files are raw little-endian `f32`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{Adapter, ImageEncoder, TextEncoder, TokenFeatures};
use crate::error::{FormError, Result};

const ADAPTER: &str = "pretrained";

#[derive(Debug, Deserialize)]
struct Manifest {
    adapter_id: String,
    text_dim: usize,
    image_dim: usize,
}

fn unavailable(reason: String) -> FormError {
    FormError::AdapterUnavailable {
        adapter: ADAPTER.to_string(),
        reason,
    }
}

fn read_f32s(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| FormError::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(FormError::Format {
            path: path.to_path_buf(),
            message: format!("length {} is not a multiple of 4", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn split_columns(values: Vec<f32>, dim: usize, path: &Path) -> Result<Vec<Vec<f32>>> {
    if dim == 0 || !values.len().is_multiple_of(dim) {
        return Err(FormError::Format {
            path: path.to_path_buf(),
            message: format!("{} floats do not form columns of length {dim}", values.len()),
        });
    }
    Ok(values.chunks_exact(dim).map(<[f32]>::to_vec).collect())
}

struct StoredText {
    dir: PathBuf,
    dim: usize,
    pad: Vec<f32>,
}

impl TextEncoder for StoredText {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_text(&self, text: &str, max_tokens: usize) -> Result<TokenFeatures> {
        let key = hex::encode(Sha256::digest(text.as_bytes()));
        let path = self.dir.join(format!("{key}.f32"));
        if !path.exists() {
            return Err(unavailable(format!(
                "no extracted token features for text {text:?} (expected {})",
                path.display()
            )));
        }
        let columns = split_columns(read_f32s(&path)?, self.dim, &path)?;
        Ok(TokenFeatures::from_columns(&columns, &self.pad, max_tokens))
    }

    fn pad_column(&self) -> Vec<f32> {
        self.pad.clone()
    }
}

struct StoredObjects {
    dir: PathBuf,
    dim: usize,
}

impl ImageEncoder for StoredObjects {
    fn dim(&self) -> usize {
        self.dim
    }

    fn detect(&self, image: &Path) -> Result<Vec<Vec<f32>>> {
        let bytes = fs::read(image).map_err(|e| FormError::io(image, e))?;
        let key = hex::encode(Sha256::digest(&bytes));
        let path = self.dir.join(format!("{key}.f32"));
        if !path.exists() {
            return Err(unavailable(format!(
                "no extracted object features for image {}",
                image.display()
            )));
        }
        split_columns(read_f32s(&path)?, self.dim, &path)
    }
}

pub(super) fn load(artifact_dir: &Path) -> Result<Adapter> {
    let manifest_path = artifact_dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| {
        unavailable(format!(
            "model artifacts not installed ({}: {e})",
            manifest_path.display()
        ))
    })?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let pad_path = artifact_dir.join("text").join("pad.f32");
    let pad = read_f32s(&pad_path)?;
    if pad.len() != manifest.text_dim {
        return Err(FormError::Format {
            path: pad_path,
            message: format!(
                "pad embedding has {} entries, expected {}",
                pad.len(),
                manifest.text_dim
            ),
        });
    }
    let text = StoredText {
        dir: artifact_dir.join("text"),
        dim: manifest.text_dim,
        pad,
    };
    let objects = StoredObjects {
        dir: artifact_dir.join("objects"),
        dim: manifest.image_dim,
    };
    Ok(Adapter::new(
        format!("pretrained:{}", manifest.adapter_id),
        Box::new(text),
        Box::new(objects),
    ))
}
