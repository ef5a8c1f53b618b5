use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{ImageEncoder, TextEncoder, TokenFeatures};
use crate::error::{FormError, Result};

pub const CLS_TOKEN: &str = "[CLS]";
pub const PAD_TOKEN: &str = "[PAD]";

/// Largest number of synthetic objects the toy detector reports.
pub const TOY_MAX_DETECTIONS: usize = 8;

/// Deterministic Gaussian embedding of `key`, scaled to unit expected norm.
pub fn hash_embedding(key: &str, dim: usize) -> Vec<f32> {
    let digest = Sha256::digest(key.as_bytes());
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(seed);
    let scale = 1.0 / (dim as f64).sqrt();
    (0..dim)
        .map(|_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            (v * scale) as f32
        })
        .collect()
}

/// Lowercased whitespace tokens with surrounding punctuation trimmed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '@' && c != '#'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Hash-embedding text encoder.
///
/// Content tokens map to [`hash_embedding`]. The sequence-start column is the
/// `[CLS]` embedding plus the mean of the kept content-token embeddings, so
/// the sentence feature read from it depends on the text.
#[derive(Debug, Clone)]
pub struct ToyTextEncoder {
    dim: usize,
}

impl ToyTextEncoder {
    pub fn new(dim: usize) -> Self {
        ToyTextEncoder { dim }
    }
}

impl TextEncoder for ToyTextEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_text(&self, text: &str, max_tokens: usize) -> Result<TokenFeatures> {
        let words = tokenize(text);
        let kept = words.len().min(max_tokens.saturating_sub(1));
        let mut columns = Vec::with_capacity(kept + 1);
        let mut first = hash_embedding(CLS_TOKEN, self.dim);
        let content: Vec<Vec<f32>> = words[..kept].iter().map(|w| hash_embedding(w, self.dim)).collect();
        if !content.is_empty() {
            let inv = 1.0 / content.len() as f32;
            for col in &content {
                for (f, v) in first.iter_mut().zip(col) {
                    *f += v * inv;
                }
            }
        }
        columns.push(first);
        columns.extend(content);
        Ok(TokenFeatures::from_columns(&columns, &self.pad_column(), max_tokens))
    }

    fn pad_column(&self) -> Vec<f32> {
        hash_embedding(PAD_TOKEN, self.dim)
    }
}

/// Derives between 1 and [`TOY_MAX_DETECTIONS`] pseudo-objects from the digest
/// of the image bytes.
#[derive(Debug, Clone)]
pub struct ToyImageEncoder {
    dim: usize,
}

impl ToyImageEncoder {
    pub fn new(dim: usize) -> Self {
        ToyImageEncoder { dim }
    }

    pub fn detections_for_bytes(&self, bytes: &[u8]) -> Vec<Vec<f32>> {
        let digest = hex::encode(Sha256::digest(bytes));
        let count = 1 + usize::from_str_radix(&digest[..2], 16).unwrap_or(0) % TOY_MAX_DETECTIONS;
        (0..count)
            .map(|j| hash_embedding(&format!("object:{digest}:{j}"), self.dim))
            .collect()
    }
}

impl ImageEncoder for ToyImageEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn detect(&self, path: &Path) -> Result<Vec<Vec<f32>>> {
        let bytes = fs::read(path).map_err(|e| FormError::io(path, e))?;
        Ok(self.detections_for_bytes(&bytes))
    }
}
