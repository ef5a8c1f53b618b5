//! Multi-modal rumor verification over conversation threads: claim text and
//! image fusion, coarse response selection, fine-grained relation reasoning
//! over the selected responses, and the training and evaluation harness.

pub mod autograd;
pub mod data;
pub mod encoders;
pub mod error;
pub mod model;
pub mod synthetic;
pub mod training;

pub use data::{ConversationThread, FoldSplit, PaddingPolicy, RumorLabel, TruncatedThread};
pub use encoders::{Adapter, AdapterKind, EncodedThread, FeatureCache};
pub use error::{FormError, Result};
pub use model::{Ablation, FormModel, ModelConfig, ModelDims, Parameters, Prediction, ThreadInput};
pub use synthetic::{SyntheticCorpus, SyntheticSpec};
pub use training::{EncodedCorpus, EvalReport, TrainConfig};
