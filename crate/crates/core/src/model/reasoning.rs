//! Fine-grained reasoning over a fully connected graph of the selected
//! responses and the fused claim.
//!
//! For every node `q`, each node `p` (including `q` itself) sends a message
//! built by token-level cosine attention of `p`'s tokens over the claim's
//! fine features and `q`'s tokens. The messages are pooled with learned
//! neighbor weights, node `q` predicts a class distribution, and the claim
//! scores how significant `q` is. The graph prediction is the
//! significance-weighted mixture of per-node distributions.

use ndarray::Array2;

use super::fusion::FusedClaim;
use super::selection::Mlp;
use crate::autograd::{Tape, Var};

/// A selected response (or the claim itself, for an empty graph).
#[derive(Debug, Clone)]
pub struct GraphNode {
    /// Response slot, `None` for the claim-only fallback node.
    pub slot: Option<usize>,
    /// `H^q`, `d_t × M`.
    pub tokens: Var,
    pub token_mask: Vec<bool>,
    /// `z^q`, `d_t × 1`.
    pub sentence: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct ReasoningParams {
    pub w_p: Var,
    pub w_q: Var,
    /// `W^{p←{q,s}}`, `1 × d`.
    pub w_token_attn: Var,
    pub lambda: Mlp,
    pub w_y: Var,
    /// `W^{s←q}`, `1 × d`.
    pub w_sig: Var,
    pub w_z: Var,
}

/// A node's tokens projected for both roles it plays.
#[derive(Debug, Clone)]
pub struct ProjectedNode {
    /// `tanh(W^p H)`, used when the node sends a message.
    pub as_sender: Var,
    /// `tanh(W^q H)`, used when the node receives and for significance.
    pub as_receiver: Var,
    pub token_mask: Vec<bool>,
    pub sentence: Var,
}

pub fn project_node(tape: &Tape, node: &GraphNode, w_p: Var, w_q: Var) -> ProjectedNode {
    let p = tape.matmul(w_p, node.tokens);
    let q = tape.matmul(w_q, node.tokens);
    ProjectedNode {
        as_sender: tape.tanh(p),
        as_receiver: tape.tanh(q),
        token_mask: node.token_mask.clone(),
        sentence: node.sentence,
    }
}

fn sum_weights(mask: &[bool], mask_padding: bool) -> Array2<f64> {
    Array2::from_shape_fn(
        (mask.len(), 1),
        |(i, _)| {
            if !mask_padding || mask[i] {
                1.0
            } else {
                0.0
            }
        },
    )
}

/// `z^{p←{q,s}}`, a `d × 1` message from `p` to `q`.
pub fn neighbor_message(
    tape: &Tape,
    sender: &ProjectedNode,
    receiver: &ProjectedNode,
    fused: &FusedClaim,
    w_token_attn: Var,
    mask_padding: bool,
) -> Var {
    let keys = tape.concat_cols(&[fused.fine, receiver.as_receiver]);
    let key_mask: Vec<bool> = fused.fine_mask.iter().chain(&receiver.token_mask).copied().collect();
    let cos = tape.cosine(sender.as_sender, keys);
    let attn = tape.softmax_rows(cos, mask_padding.then_some(key_mask.as_slice()));
    let attn_t = tape.transpose(attn);
    let attended = tape.matmul(keys, attn_t);
    let enriched = tape.add(attended, sender.as_sender);
    let logits = tape.matmul(w_token_attn, enriched);
    let beta = tape.softmax_rows(logits, mask_padding.then_some(sender.token_mask.as_slice()));
    let beta_t = tape.transpose(beta);
    tape.matmul(enriched, beta_t)
}

/// `v^q = [Σ_p λ_p z^{p←{q,s}} ; tanh(W^z z^q)]`, a `2d × 1` column.
pub fn propagate(tape: &Tape, messages: &[Var], sentence: Var, s_m: Var, w_z: Var, lambda: &Mlp) -> Var {
    assert!(!messages.is_empty(), "propagate needs at least one message");
    let own = tape.matmul(w_z, sentence);
    let own = tape.tanh(own);
    let inputs: Vec<Var> = messages.iter().map(|&m| tape.concat_rows(&[m, s_m, own])).collect();
    let inputs = tape.concat_cols(&inputs);
    let scores = lambda.apply(tape, inputs);
    let weights = tape.softmax_rows(scores, None);
    let stacked = tape.concat_cols(messages);
    let weights_t = tape.transpose(weights);
    let pooled = tape.matmul(stacked, weights_t);
    tape.concat_rows(&[pooled, own])
}

/// Softmax over a column vector.
pub(crate) fn softmax_col(tape: &Tape, logits: Var) -> Var {
    let row = tape.transpose(logits);
    let p = tape.softmax_rows(row, None);
    tape.transpose(p)
}

/// `P(y | n_q, G, S) = softmax(W^y [v^q ; s_m])`, a `4 × 1` column.
pub fn node_predict(tape: &Tape, v_q: Var, s_m: Var, w_y: Var) -> Var {
    let x = tape.concat_rows(&[v_q, s_m]);
    let logits = tape.matmul(w_y, x);
    softmax_col(tape, logits)
}

/// `P(n_q | G, S)` for every node, a `1 × |G|` row.
pub fn node_significance(
    tape: &Tape,
    nodes: &[ProjectedNode],
    fused: &FusedClaim,
    w_sig: Var,
    mask_padding: bool,
) -> Var {
    let sum = tape.constant(sum_weights(&fused.fine_mask, mask_padding));
    let raw: Vec<Var> = nodes
        .iter()
        .map(|node| {
            let cos = tape.cosine(fused.fine, node.as_receiver);
            let attn = tape.softmax_rows(cos, mask_padding.then_some(node.token_mask.as_slice()));
            let attn_t = tape.transpose(attn);
            let attended = tape.matmul(node.as_receiver, attn_t);
            let enriched = tape.add(attended, fused.fine);
            let pooled = tape.matmul(enriched, sum);
            tape.matmul(w_sig, pooled)
        })
        .collect();
    let scores = tape.concat_cols(&raw);
    tape.softmax_rows(scores, None)
}

#[derive(Debug, Clone)]
pub struct GraphOutput {
    /// `4 × 1` mixture distribution.
    pub probs: Var,
    /// `4 × |G|`, one distribution per node.
    pub per_node: Var,
    /// `1 × |G|`.
    pub significance: Var,
}

/// Mixture prediction `Σ_q P(y|n_q,G,S) P(n_q|G,S)` over a non-empty graph.
pub fn graph_predict(
    tape: &Tape,
    nodes: &[GraphNode],
    fused: &FusedClaim,
    params: &ReasoningParams,
    mask_padding: bool,
) -> GraphOutput {
    assert!(!nodes.is_empty(), "graph_predict needs at least one node");
    let projected: Vec<ProjectedNode> = nodes
        .iter()
        .map(|n| project_node(tape, n, params.w_p, params.w_q))
        .collect();
    let per_node: Vec<Var> = projected
        .iter()
        .map(|receiver| {
            let messages: Vec<Var> = projected
                .iter()
                .map(|sender| neighbor_message(tape, sender, receiver, fused, params.w_token_attn, mask_padding))
                .collect();
            let v = propagate(
                tape,
                &messages,
                receiver.sentence,
                fused.coarse,
                params.w_z,
                &params.lambda,
            );
            node_predict(tape, v, fused.coarse, params.w_y)
        })
        .collect();
    let per_node = tape.concat_cols(&per_node);
    let significance = node_significance(tape, &projected, fused, params.w_sig, mask_padding);
    let sig_t = tape.transpose(significance);
    let probs = tape.matmul(per_node, sig_t);
    GraphOutput {
        probs,
        per_node,
        significance,
    }
}
