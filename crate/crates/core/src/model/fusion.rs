//! Claim fusion: token and object features are projected into a shared space
//! and aligned in both directions with raw cosine weights.

use ndarray::Array2;

use crate::autograd::{Tape, Var};

/// Fused claim representation on a tape.
#[derive(Debug, Clone)]
pub struct FusedClaim {
    /// `S^m`, `d × (M+K)` (or `d × M` without the visual branch).
    pub fine: Var,
    /// Real/padding status of the columns of `fine`.
    pub fine_mask: Vec<bool>,
    /// `s_m`, `d × 1`.
    pub coarse: Var,
    pub tokens: Var,
    pub objects: Option<Var>,
}

/// `(T^s, V^s) = (tanh(W^h H^s), tanh(W^o O^s))`.
pub fn project_modalities(tape: &Tape, tokens: Var, objects: Var, w_h: Var, w_o: Var) -> (Var, Var) {
    let t = tape.matmul(w_h, tokens);
    let v = tape.matmul(w_o, objects);
    (tape.tanh(t), tape.tanh(v))
}

/// Column weights for a mean over the real entries of `mask` (all entries
/// when `mask` is `None`). A mean over no entries is zero.
pub(crate) fn mean_weights(len: usize, mask: Option<&[bool]>) -> Array2<f64> {
    let count = mask.map_or(len, |m| m.iter().filter(|&&b| b).count());
    Array2::from_shape_fn((len, 1), |(i, _)| {
        if count == 0 || mask.is_some_and(|m| !m[i]) {
            0.0
        } else {
            1.0 / count as f64
        }
    })
}

/// Repeats `mask` over `rows` rows as a 0/1 matrix.
pub(crate) fn column_mask(rows: usize, mask: &[bool]) -> Array2<f64> {
    Array2::from_shape_fn((rows, mask.len()), |(_, j)| if mask[j] { 1.0 } else { 0.0 })
}

/// Every query column attends to every key column with its raw cosine
/// similarity; the attended vectors are averaged over the queries.
fn cross_align(tape: &Tape, queries: Var, keys: Var, masks: Option<(&[bool], &[bool])>) -> Var {
    let nq = tape.shape(queries).1;
    let mut cos = tape.cosine(queries, keys);
    if let Some((_, key_mask)) = masks {
        cos = tape.mul_const(cos, column_mask(nq, key_mask));
    }
    let cos_t = tape.transpose(cos);
    let aligned = tape.matmul(keys, cos_t);
    let mean = tape.constant(mean_weights(nq, masks.map(|(q, _)| q)));
    tape.matmul(aligned, mean)
}

/// `s^{t→o}`: tokens query objects.
pub fn cross_align_text_to_image(tape: &Tape, tokens: Var, objects: Var, masks: Option<(&[bool], &[bool])>) -> Var {
    cross_align(tape, tokens, objects, masks)
}

/// `s^{o→t}`: objects query tokens. `masks` is `(object_mask, token_mask)`.
pub fn cross_align_image_to_text(tape: &Tape, objects: Var, tokens: Var, masks: Option<(&[bool], &[bool])>) -> Var {
    cross_align(tape, objects, tokens, masks)
}

/// `s_m = tanh(W^{o→t} s^{o→t}) + tanh(W^{t→o} s^{t→o})`.
pub fn fuse(tape: &Tape, s_t2o: Var, s_o2t: Var, w_t2o: Var, w_o2t: Var) -> Var {
    let a = tape.matmul(w_o2t, s_o2t);
    let b = tape.matmul(w_t2o, s_t2o);
    let (a, b) = (tape.tanh(a), tape.tanh(b));
    tape.add(a, b)
}
