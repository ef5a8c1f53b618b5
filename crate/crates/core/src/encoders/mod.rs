//! Token-, sentence- and object-level feature extraction.
//!
//! Text and image encoders sit behind the [`TextEncoder`] and
//! [`ImageEncoder`] traits and are bundled into an [`Adapter`]. Two adapters
//! ship with the crate: a deterministic hash-embedding [`toy`] adapter and a
//! [`pretrained`] adapter that reads features extracted ahead of time by an
//! external contextual text encoder and region-based object detector.
//!
//! Raw token features are cached pre-projection; the sentence projection is
//! part of the model's parameters (see [`sentence_of`]).

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::data::{ConversationThread, PaddingPolicy, RumorLabel, TruncatedThread};
use crate::error::Result;

pub mod cache;
pub mod pretrained;
pub mod toy;

pub use cache::FeatureCache;

/// Token hidden states `d_t × M` and which columns are real tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenFeatures {
    pub matrix: Array2<f32>,
    pub mask: Vec<bool>,
}

impl TokenFeatures {
    /// Builds `max_tokens` columns from the given token columns, truncating
    /// extra tokens and filling the rest with `pad`.
    pub fn from_columns(columns: &[Vec<f32>], pad: &[f32], max_tokens: usize) -> Self {
        let dim = pad.len();
        let kept = columns.len().min(max_tokens);
        let matrix = Array2::from_shape_fn(
            (dim, max_tokens),
            |(r, c)| {
                if c < kept {
                    columns[c][r]
                } else {
                    pad[r]
                }
            },
        );
        TokenFeatures {
            matrix,
            mask: (0..max_tokens).map(|c| c < kept).collect(),
        }
    }

    /// All-`[PAD]` encoding used for padded response slots.
    pub fn all_padding(pad: &[f32], max_tokens: usize) -> Self {
        Self::from_columns(&[], pad, max_tokens)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn len(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Object features `d_i × K`; missing objects are one-padded.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectFeatures {
    pub matrix: Array2<f32>,
    pub mask: Vec<bool>,
}

impl ObjectFeatures {
    pub fn from_detections(detections: &[Vec<f32>], dim: usize, max_objects: usize) -> Self {
        let kept = detections.len().min(max_objects);
        let matrix = Array2::from_shape_fn(
            (dim, max_objects),
            |(r, c)| {
                if c < kept {
                    detections[c][r]
                } else {
                    1.0
                }
            },
        );
        ObjectFeatures {
            matrix,
            mask: (0..max_objects).map(|c| c < kept).collect(),
        }
    }

    /// Encoding of a claim without an image.
    pub fn dummy(dim: usize, max_objects: usize) -> Self {
        Self::from_detections(&[], dim, max_objects)
    }
}

/// `tanh(W_t · H[:, 0])`.
pub fn sentence_of(tokens: &TokenFeatures, w_t: &Array2<f64>) -> Array1<f64> {
    let first = tokens.matrix.column(0).mapv(f64::from);
    w_t.dot(&first).mapv(f64::tanh)
}

pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode_text(&self, text: &str, max_tokens: usize) -> Result<TokenFeatures>;
    /// The `[PAD]` embedding.
    fn pad_column(&self) -> Vec<f32>;
}

pub trait ImageEncoder: Send + Sync {
    fn dim(&self) -> usize;
    /// Per-object feature columns for the image at `path`.
    fn detect(&self, path: &Path) -> Result<Vec<Vec<f32>>>;
}

/// Which adapter to construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterKind {
    Toy,
    Pretrained,
}

impl std::str::FromStr for AdapterKind {
    type Err = crate::error::FormError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(AdapterKind::Toy),
            "pretrained" => Ok(AdapterKind::Pretrained),
            other => Err(crate::error::FormError::InvalidParameter(format!(
                "unknown adapter {other:?}; expected toy or pretrained"
            ))),
        }
    }
}

/// A text encoder and an image encoder under one cache identity.
pub struct Adapter {
    id: String,
    text: Box<dyn TextEncoder>,
    image: Box<dyn ImageEncoder>,
}

impl Adapter {
    pub fn new(id: impl Into<String>, text: Box<dyn TextEncoder>, image: Box<dyn ImageEncoder>) -> Self {
        Adapter {
            id: id.into(),
            text,
            image,
        }
    }

    pub fn toy(text_dim: usize, image_dim: usize) -> Self {
        let text = toy::ToyTextEncoder::new(text_dim);
        let image = toy::ToyImageEncoder::new(image_dim);
        Adapter::new(
            format!("toy-v1-t{text_dim}-i{image_dim}"),
            Box::new(text),
            Box::new(image),
        )
    }

    pub fn pretrained(artifact_dir: &Path) -> Result<Self> {
        pretrained::load(artifact_dir)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text_dim(&self) -> usize {
        self.text.dim()
    }

    pub fn image_dim(&self) -> usize {
        self.image.dim()
    }

    pub fn encode_text(&self, text: &str, max_tokens: usize) -> Result<TokenFeatures> {
        self.text.encode_text(text, max_tokens)
    }

    pub fn encode_image(&self, image_path: Option<&Path>, max_objects: usize) -> Result<ObjectFeatures> {
        match image_path {
            None => Ok(ObjectFeatures::dummy(self.image.dim(), max_objects)),
            Some(path) => {
                let detections = self.image.detect(path)?;
                Ok(ObjectFeatures::from_detections(
                    &detections,
                    self.image.dim(),
                    max_objects,
                ))
            }
        }
    }

    /// Encodes a truncated thread into fully padded tensors.
    pub fn encode_thread(&self, truncated: &TruncatedThread, policy: &PaddingPolicy) -> Result<EncodedThread> {
        let thread = &truncated.thread;
        let claim_tokens = self.encode_text(&thread.claim.text, policy.max_tokens)?;
        let claim_objects = self.encode_image(thread.claim.image_path.as_deref(), policy.max_objects)?;
        let pad = TokenFeatures::all_padding(&self.text.pad_column(), policy.max_tokens);
        let mut response_tokens = Vec::with_capacity(policy.max_responses);
        for slot in 0..policy.max_responses {
            match thread.responses.get(slot) {
                Some(r) if truncated.response_mask.get(slot).copied().unwrap_or(false) => {
                    response_tokens.push(self.encode_text(&r.text, policy.max_tokens)?)
                }
                _ => response_tokens.push(pad.clone()),
            }
        }
        let response_mask = (0..policy.max_responses)
            .map(|i| truncated.response_mask.get(i).copied().unwrap_or(false) && i < thread.responses.len())
            .collect::<Vec<_>>();
        let response_ids = thread
            .responses
            .iter()
            .take(policy.max_responses)
            .map(|r| r.id.clone())
            .collect();
        Ok(EncodedThread {
            thread_id: thread.claim.id.clone(),
            label: thread.label,
            claim_tokens,
            claim_objects,
            response_tokens,
            response_mask,
            response_ids,
        })
    }

    /// Truncates per `policy`, then encodes.
    pub fn encode_conversation(&self, thread: &ConversationThread, policy: &PaddingPolicy) -> Result<EncodedThread> {
        self.encode_thread(&crate::data::truncate_and_mark(thread, policy), policy)
    }
}

/// Cached raw features for one thread.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedThread {
    pub thread_id: String,
    pub label: RumorLabel,
    pub claim_tokens: TokenFeatures,
    pub claim_objects: ObjectFeatures,
    /// Exactly `max_responses` entries; padded slots are all-`[PAD]`.
    pub response_tokens: Vec<TokenFeatures>,
    pub response_mask: Vec<bool>,
    /// Ids of the real responses, by slot.
    pub response_ids: Vec<String>,
}

impl EncodedThread {
    pub fn max_responses(&self) -> usize {
        self.response_tokens.len()
    }

    pub fn real_responses(&self) -> usize {
        self.response_mask.iter().filter(|&&m| m).count()
    }

    /// `z^s`.
    pub fn claim_sentence(&self, w_t: &Array2<f64>) -> Array1<f64> {
        sentence_of(&self.claim_tokens, w_t)
    }

    /// `Z` (`d_t × N`): one sentence feature per response slot.
    pub fn response_sentences(&self, w_t: &Array2<f64>) -> Array2<f64> {
        let mut z = Array2::zeros((w_t.nrows(), self.max_responses()));
        for (i, tokens) in self.response_tokens.iter().enumerate() {
            z.column_mut(i).assign(&sentence_of(tokens, w_t));
        }
        z
    }

    /// First-token columns of every response slot, `d_t × N`.
    pub fn response_first_tokens(&self) -> Array2<f64> {
        let dim = self.claim_tokens.dim();
        let mut out = Array2::zeros((dim, self.max_responses()));
        for (i, tokens) in self.response_tokens.iter().enumerate() {
            out.column_mut(i).assign(&tokens.matrix.column(0).mapv(f64::from));
        }
        out
    }

    /// Thread-local id of the response in `slot`, if real.
    pub fn response_id(&self, slot: usize) -> Option<&str> {
        self.response_ids.get(slot).map(String::as_str)
    }
}
