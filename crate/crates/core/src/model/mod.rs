//! The full model: claim fusion → coarse selection → fine reasoning.

use std::collections::BTreeMap;

use ndarray::{s, Array2};

use crate::autograd::{Tape, Var};
use crate::data::RumorLabel;
use crate::encoders::EncodedThread;
use crate::error::Result;

pub mod fusion;
pub mod params;
pub mod reasoning;
pub mod selection;

pub use fusion::FusedClaim;
pub use params::{names, Ablation, BoundParams, ModelConfig, ModelDims, Parameters, NUM_CLASSES};
pub use reasoning::{GraphNode, GraphOutput, ReasoningParams};
pub use selection::{select_top_k, Mlp};

use crate::training::loss::{loss_on_tape, LossValues};

/// Model-ready features of one thread in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreadInput {
    pub claim_tokens: Array2<f64>,
    pub claim_token_mask: Vec<bool>,
    pub claim_objects: Array2<f64>,
    pub claim_object_mask: Vec<bool>,
    pub response_tokens: Vec<Array2<f64>>,
    pub response_token_masks: Vec<Vec<bool>>,
    pub response_mask: Vec<bool>,
}

impl From<&EncodedThread> for ThreadInput {
    fn from(e: &EncodedThread) -> Self {
        ThreadInput {
            claim_tokens: e.claim_tokens.matrix.mapv(f64::from),
            claim_token_mask: e.claim_tokens.mask.clone(),
            claim_objects: e.claim_objects.matrix.mapv(f64::from),
            claim_object_mask: e.claim_objects.mask.clone(),
            response_tokens: e.response_tokens.iter().map(|t| t.matrix.mapv(f64::from)).collect(),
            response_token_masks: e.response_tokens.iter().map(|t| t.mask.clone()).collect(),
            response_mask: e.response_mask.clone(),
        }
    }
}

impl ThreadInput {
    pub fn num_slots(&self) -> usize {
        self.response_tokens.len()
    }

    /// First-token column of each response slot, `d_t × N`.
    pub fn response_first_tokens(&self) -> Array2<f64> {
        let dim = self.claim_tokens.nrows();
        let mut out = Array2::zeros((dim, self.num_slots()));
        for (i, t) in self.response_tokens.iter().enumerate() {
            out.column_mut(i).assign(&t.column(0));
        }
        out
    }

    /// Reorders response slots: slot `i` of the result is slot `order[i]`.
    pub fn permute_responses(&self, order: &[usize]) -> Self {
        let mut out = self.clone();
        out.response_tokens = order.iter().map(|&i| self.response_tokens[i].clone()).collect();
        out.response_token_masks = order.iter().map(|&i| self.response_token_masks[i].clone()).collect();
        out.response_mask = order.iter().map(|&i| self.response_mask[i]).collect();
        out
    }
}

/// Handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub y1_logits: Var,
    pub alpha: Var,
    pub selected: Vec<usize>,
    pub probs: Var,
    pub graph: Option<GraphOutput>,
    pub fused: FusedClaim,
}

/// Builds the fused claim for `config`, reading parameters from `bound`.
pub fn fuse_claim(
    tape: &Tape,
    bound: &BoundParams,
    config: &ModelConfig,
    tokens: Var,
    token_mask: &[bool],
    objects: Var,
    object_mask: &[bool],
) -> FusedClaim {
    let t = tape.matmul(bound.get(names::W_H), tokens);
    let t_s = tape.tanh(t);
    if config.ablation == Ablation::NoV {
        let d = tape.shape(t_s).0;
        return FusedClaim {
            fine: t_s,
            fine_mask: token_mask.to_vec(),
            coarse: tape.constant(Array2::zeros((d, 1))),
            tokens: t_s,
            objects: None,
        };
    }
    let v = tape.matmul(bound.get(names::W_O), objects);
    let v_s = tape.tanh(v);
    let masks = config.mask_padding;
    let s_t2o = fusion::cross_align_text_to_image(tape, t_s, v_s, masks.then_some((token_mask, object_mask)));
    let s_o2t = fusion::cross_align_image_to_text(tape, v_s, t_s, masks.then_some((object_mask, token_mask)));
    let coarse = fusion::fuse(tape, s_t2o, s_o2t, bound.get(names::W_T2O), bound.get(names::W_O2T));
    FusedClaim {
        fine: tape.concat_cols(&[t_s, v_s]),
        fine_mask: token_mask.iter().chain(object_mask).copied().collect(),
        coarse,
        tokens: t_s,
        objects: Some(v_s),
    }
}

fn mlp(bound: &BoundParams, prefix: &str) -> Mlp {
    Mlp {
        w1: bound.get(&format!("{prefix}.w1")),
        b1: bound.get(&format!("{prefix}.b1")),
        w2: bound.get(&format!("{prefix}.w2")),
        b2: bound.get(&format!("{prefix}.b2")),
    }
}

pub fn reasoning_params(bound: &BoundParams, config: &ModelConfig) -> ReasoningParams {
    ReasoningParams {
        w_p: bound.get(names::W_P),
        w_q: bound.get(names::W_Q),
        w_token_attn: bound.get(names::W_TOKEN_ATTN),
        lambda: mlp(bound, "lambda_mlp"),
        w_y: bound.get(names::W_Y),
        w_sig: bound.get(names::W_SIG),
        w_z: if config.untie_wz {
            bound.get(names::W_Z_REASON)
        } else {
            bound.get(names::W_Z)
        },
    }
}

/// Full forward pass for one thread.
pub fn forward(tape: &Tape, bound: &BoundParams, config: &ModelConfig, input: &ThreadInput) -> ForwardOutput {
    let claim_tokens = tape.constant(input.claim_tokens.clone());
    let claim_objects = tape.constant(input.claim_objects.clone());
    let fused = fuse_claim(
        tape,
        bound,
        config,
        claim_tokens,
        &input.claim_token_mask,
        claim_objects,
        &input.claim_object_mask,
    );

    let w_t = bound.get(names::W_T);
    let first = tape.constant(input.response_first_tokens());
    let z = tape.matmul(w_t, first);
    let z = tape.tanh(z);
    let alpha = selection::score_responses(
        tape,
        fused.coarse,
        z,
        bound.get(names::W_Z),
        bound.get(names::W_A),
        config.mask_padding.then_some(input.response_mask.as_slice()),
    );
    let y1_logits = selection::aux_predict(tape, alpha, z, &mlp(bound, "sel_mlp"));
    let alpha_values: Vec<f64> = tape.value(alpha).iter().copied().collect();
    let selected =
        select_top_k(&alpha_values, &input.response_mask, config.top_k).expect("top_k validated at construction");

    let (probs, graph) = if config.ablation == Ablation::NoF {
        (reasoning::softmax_col(tape, y1_logits), None)
    } else {
        let nodes: Vec<GraphNode> = if selected.is_empty() {
            let first = tape.constant(input.claim_tokens.slice(s![.., 0..1]).to_owned());
            let sentence = tape.matmul(w_t, first);
            vec![GraphNode {
                slot: None,
                tokens: claim_tokens,
                token_mask: input.claim_token_mask.clone(),
                sentence: tape.tanh(sentence),
            }]
        } else {
            selected
                .iter()
                .map(|&slot| GraphNode {
                    slot: Some(slot),
                    tokens: tape.constant(input.response_tokens[slot].clone()),
                    token_mask: input.response_token_masks[slot].clone(),
                    sentence: tape.col(z, slot),
                })
                .collect()
        };
        let params = reasoning_params(bound, config);
        let out = reasoning::graph_predict(tape, &nodes, &fused, &params, config.mask_padding);
        (out.probs, Some(out))
    };

    ForwardOutput {
        y1_logits,
        alpha,
        selected,
        probs,
        graph,
        fused,
    }
}

/// Plain-value outputs for one thread.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: [f64; NUM_CLASSES],
    pub y1_logits: [f64; NUM_CLASSES],
    pub alpha: Vec<f64>,
    pub selected: Vec<usize>,
    pub per_node_probs: Vec<[f64; NUM_CLASSES]>,
    pub node_significance: Vec<f64>,
}

impl Prediction {
    /// Arg-max class, lowest index on ties.
    pub fn label(&self) -> RumorLabel {
        let mut best = 0;
        for i in 1..NUM_CLASSES {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        RumorLabel::ALL[best]
    }
}

fn column4(a: &Array2<f64>, col: usize) -> [f64; NUM_CLASSES] {
    std::array::from_fn(|i| a[[i, col]])
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormModel {
    pub config: ModelConfig,
    pub params: Parameters,
}

impl FormModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(FormModel {
            params: Parameters::init(&config, seed),
            config,
        })
    }

    pub fn from_parameters(config: ModelConfig, params: Parameters) -> Result<Self> {
        config.validate()?;
        params.check_against(&config)?;
        Ok(FormModel { config, params })
    }

    pub fn predict(&self, input: &ThreadInput) -> Prediction {
        let tape = Tape::new();
        let bound = self.params.bind(&tape, false);
        let out = forward(&tape, &bound, &self.config, input);
        let probs = tape.value(out.probs).clone();
        let y1 = tape.value(out.y1_logits).clone();
        let (per_node_probs, node_significance) = match &out.graph {
            Some(g) => {
                let per = tape.value(g.per_node).clone();
                let sig = tape.value(g.significance).iter().copied().collect();
                ((0..per.ncols()).map(|c| column4(&per, c)).collect(), sig)
            }
            None => (Vec::new(), Vec::new()),
        };
        let alpha = tape.value(out.alpha).iter().copied().collect();
        Prediction {
            probs: column4(&probs, 0),
            y1_logits: column4(&y1, 0),
            alpha,
            selected: out.selected,
            per_node_probs,
            node_significance,
        }
    }

    /// Loss terms and the gradient of the total loss for every parameter.
    pub fn loss_and_gradients(
        &self,
        input: &ThreadInput,
        label: RumorLabel,
    ) -> (LossValues, BTreeMap<String, Array2<f64>>) {
        let tape = Tape::new();
        let bound = self.params.bind(&tape, true);
        let out = forward(&tape, &bound, &self.config, input);
        let loss = loss_on_tape(&tape, out.y1_logits, out.probs, label, self.config.ablation);
        let values = LossValues {
            total: tape.scalar(loss.total),
            selection: tape.scalar(loss.selection),
            reason: tape.scalar(loss.reason),
        };
        let grads = tape.backward(loss.total);
        let out = bound
            .iter()
            .map(|(name, var)| {
                let shape = self.params.get(name).expect("bound from params").dim();
                (name.to_string(), grads.get_or_zeros(var, shape))
            })
            .collect();
        (values, out)
    }

    /// Total loss only, for finite-difference checks.
    pub fn loss(&self, input: &ThreadInput, label: RumorLabel) -> LossValues {
        let tape = Tape::new();
        let bound = self.params.bind(&tape, false);
        let out = forward(&tape, &bound, &self.config, input);
        let loss = loss_on_tape(&tape, out.y1_logits, out.probs, label, self.config.ablation);
        LossValues {
            total: tape.scalar(loss.total),
            selection: tape.scalar(loss.selection),
            reason: tape.scalar(loss.reason),
        }
    }
}
