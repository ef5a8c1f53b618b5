//! Persistent per-thread feature cache.
//!
//! One file per thread: the magic `FORMFEAT`, a little-endian `u64` header
//! length, a JSON header, then the float arrays as little-endian `f32` in
//! row-major order: claim tokens (`d_t × M`), claim objects (`d_i × K`),
//! response tokens (`N × d_t × M`). Entries written by a different adapter or
//! under a different padding policy are treated as misses.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EncodedThread, ObjectFeatures, TokenFeatures};
use crate::data::{PaddingPolicy, RumorLabel};
use crate::error::{FormError, Result};

const MAGIC: &[u8; 8] = b"FORMFEAT";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: String,
    adapter_id: String,
    policy: PaddingPolicy,
    thread_id: String,
    label: RumorLabel,
    shapes: Shapes,
    claim_token_mask: Vec<bool>,
    claim_object_mask: Vec<bool>,
    response_token_masks: Vec<Vec<bool>>,
    response_mask: Vec<bool>,
    response_ids: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Shapes {
    claim_tokens: [usize; 2],
    claim_objects: [usize; 2],
    response_tokens: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
}

fn file_stem(thread_id: &str) -> String {
    let safe = !thread_id.is_empty()
        && thread_id.len() <= 64
        && thread_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if safe {
        thread_id.to_string()
    } else {
        hex::encode(Sha256::digest(thread_id.as_bytes()))
    }
}

fn push_floats(out: &mut Vec<u8>, values: impl Iterator<Item = f32>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl FeatureCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| FormError::io(&dir, e))?;
        Ok(FeatureCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, thread_id: &str) -> PathBuf {
        self.dir.join(format!("{}.feat", file_stem(thread_id)))
    }

    /// Writes to a temporary file and renames it into place.
    pub fn put(&self, encoded: &EncodedThread, adapter_id: &str, policy: &PaddingPolicy) -> Result<()> {
        let (d_t, m) = encoded.claim_tokens.matrix.dim();
        let (d_i, k) = encoded.claim_objects.matrix.dim();
        let n = encoded.response_tokens.len();
        let header = Header {
            dtype: "float32".into(),
            adapter_id: adapter_id.into(),
            policy: *policy,
            thread_id: encoded.thread_id.clone(),
            label: encoded.label,
            shapes: Shapes {
                claim_tokens: [d_t, m],
                claim_objects: [d_i, k],
                response_tokens: [n, d_t, m],
            },
            claim_token_mask: encoded.claim_tokens.mask.clone(),
            claim_object_mask: encoded.claim_objects.mask.clone(),
            response_token_masks: encoded.response_tokens.iter().map(|t| t.mask.clone()).collect(),
            response_mask: encoded.response_mask.clone(),
            response_ids: encoded.response_ids.clone(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut bytes = Vec::with_capacity(16 + header.len() + 4 * (d_t * m * (n + 1) + d_i * k));
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&header);
        push_floats(&mut bytes, encoded.claim_tokens.matrix.iter().copied());
        push_floats(&mut bytes, encoded.claim_objects.matrix.iter().copied());
        for t in &encoded.response_tokens {
            push_floats(&mut bytes, t.matrix.iter().copied());
        }

        let path = self.path_for(&encoded.thread_id);
        let tmp = self.dir.join(format!(
            ".{}.{}.{:?}.tmp",
            file_stem(&encoded.thread_id),
            std::process::id(),
            std::thread::current().id()
        ));
        let mut f = fs::File::create(&tmp).map_err(|e| FormError::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| FormError::io(&tmp, e))?;
        f.sync_all().map_err(|e| FormError::io(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, &path).map_err(|e| FormError::io(&path, e))
    }

    /// Returns the cached encoding, or `None` when absent or stale.
    pub fn get(&self, thread_id: &str, adapter_id: &str, policy: &PaddingPolicy) -> Result<Option<EncodedThread>> {
        let path = self.path_for(thread_id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(FormError::io(&path, e)),
        };
        let bad = |message: &str| FormError::Format {
            path: path.clone(),
            message: message.to_string(),
        };
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing feature-cache magic"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header_end = 16usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..header_end])?;
        if header.adapter_id != adapter_id || header.policy != *policy || header.thread_id != thread_id {
            return Ok(None);
        }
        if header.dtype != "float32" {
            return Err(bad("unsupported dtype"));
        }
        let [d_t, m] = header.shapes.claim_tokens;
        let [d_i, k] = header.shapes.claim_objects;
        let [n, _, _] = header.shapes.response_tokens;
        let expected = 4 * (d_t * m * (n + 1) + d_i * k);
        let payload = &bytes[header_end..];
        if payload.len() != expected || header.response_token_masks.len() != n {
            return Err(bad("payload size does not match header shapes"));
        }
        let mut floats = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let mut take = |rows: usize, cols: usize| -> Array2<f32> {
            Array2::from_shape_vec((rows, cols), floats.by_ref().take(rows * cols).collect())
                .expect("payload length checked")
        };
        let claim_tokens = TokenFeatures {
            matrix: take(d_t, m),
            mask: header.claim_token_mask,
        };
        let claim_objects = ObjectFeatures {
            matrix: take(d_i, k),
            mask: header.claim_object_mask,
        };
        let response_tokens = header
            .response_token_masks
            .into_iter()
            .map(|mask| TokenFeatures {
                matrix: take(d_t, m),
                mask,
            })
            .collect();
        Ok(Some(EncodedThread {
            thread_id: header.thread_id,
            label: header.label,
            claim_tokens,
            claim_objects,
            response_tokens,
            response_mask: header.response_mask,
            response_ids: header.response_ids,
        }))
    }
}
