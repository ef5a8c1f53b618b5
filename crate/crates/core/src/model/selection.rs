//! Coarse-grained selection: post-level relevance of every response, the
//! auxiliary prediction, and the hard top-k cut.

use ndarray::Array2;

use crate::autograd::{Tape, Var};
use crate::error::{FormError, Result};

/// One-hidden-layer ReLU perceptron applied column-wise.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl Mlp {
    pub fn apply(&self, tape: &Tape, x: Var) -> Var {
        let h = tape.matmul(self.w1, x);
        let h = tape.add_bias(h, self.b1);
        let h = tape.relu(h);
        let o = tape.matmul(self.w2, h);
        tape.add_bias(o, self.b2)
    }
}

/// Relevance weights `α = softmax(W^a [s_m 1ᵀ ; tanh(W^z Z)])`, a `1 × N` row.
///
/// With `mask`, padded responses are excluded from the softmax.
pub fn score_responses(tape: &Tape, s_m: Var, z: Var, w_z: Var, w_a: Var, mask: Option<&[bool]>) -> Var {
    let n = tape.shape(z).1;
    let ones = tape.constant(Array2::ones((1, n)));
    let claim = tape.matmul(s_m, ones);
    let projected = tape.matmul(w_z, z);
    let projected = tape.tanh(projected);
    let a = tape.concat_rows(&[claim, projected]);
    let scores = tape.matmul(w_a, a);
    tape.softmax_rows(scores, mask)
}

/// `ŷ₁ = MLP(Σ_i α_i z^i)`, a `4 × 1` logit column.
pub fn aux_predict(tape: &Tape, alpha: Var, z: Var, mlp: &Mlp) -> Var {
    let alpha_col = tape.transpose(alpha);
    let pooled = tape.matmul(z, alpha_col);
    mlp.apply(tape, pooled)
}

/// Indices of the `k` largest weights among real responses, ordered by
/// descending weight with ties broken by the lower index.
pub fn select_top_k(alpha: &[f64], response_mask: &[bool], k: usize) -> Result<Vec<usize>> {
    if k < 1 {
        return Err(FormError::InvalidParameter("top-k must be ≥ 1".into()));
    }
    let mut real: Vec<usize> = (0..alpha.len())
        .filter(|&i| response_mask.get(i).copied().unwrap_or(false))
        .collect();
    real.sort_by(|&a, &b| alpha[b].total_cmp(&alpha[a]).then(a.cmp(&b)));
    real.truncate(k);
    Ok(real)
}
