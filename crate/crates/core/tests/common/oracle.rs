//! Explicit-loop reference implementations. Everything here indexes scalars
//! directly; no ndarray products or broadcasting.

#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

use form_core::model::{names, Ablation, ModelConfig, Parameters, ThreadInput};
use ndarray::Array2;

pub type Col = Vec<f64>;

pub fn column(a: &Array2<f64>, j: usize) -> Col {
    (0..a.nrows()).map(|i| a[[i, j]]).collect()
}

pub fn columns(a: &Array2<f64>) -> Vec<Col> {
    (0..a.ncols()).map(|j| column(a, j)).collect()
}

pub fn matvec(w: &Array2<f64>, x: &[f64]) -> Col {
    assert_eq!(w.ncols(), x.len());
    let mut out = vec![0.0; w.nrows()];
    for i in 0..w.nrows() {
        let mut acc = 0.0;
        for j in 0..w.ncols() {
            acc += w[[i, j]] * x[j];
        }
        out[i] = acc;
    }
    out
}

pub fn tanh(x: &[f64]) -> Col {
    x.iter().map(|v| v.tanh()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

pub fn add(a: &[f64], b: &[f64]) -> Col {
    (0..a.len()).map(|i| a[i] + b[i]).collect()
}

pub fn scale(a: &[f64], s: f64) -> Col {
    a.iter().map(|v| v * s).collect()
}

pub fn concat(parts: &[&[f64]]) -> Col {
    let mut out = Vec::new();
    for p in parts {
        out.extend_from_slice(p);
    }
    out
}

/// Softmax over `x`; masked entries get zero and an all-masked input gives
/// all zeros.
pub fn softmax(x: &[f64], mask: Option<&[bool]>) -> Col {
    let keep = |i: usize| mask.is_none_or(|m| m[i]);
    let mut max = f64::NEG_INFINITY;
    for i in 0..x.len() {
        if keep(i) && x[i] > max {
            max = x[i];
        }
    }
    if max == f64::NEG_INFINITY {
        return vec![0.0; x.len()];
    }
    let mut e = vec![0.0; x.len()];
    let mut sum = 0.0;
    for i in 0..x.len() {
        if keep(i) {
            e[i] = (x[i] - max).exp();
            sum += e[i];
        }
    }
    e.iter().map(|v| v / sum).collect()
}

pub struct MlpRef<'a> {
    pub w1: &'a Array2<f64>,
    pub b1: &'a Array2<f64>,
    pub w2: &'a Array2<f64>,
    pub b2: &'a Array2<f64>,
}

impl MlpRef<'_> {
    pub fn from_params<'a>(p: &'a Parameters, prefix: &str) -> MlpRef<'a> {
        MlpRef {
            w1: p.get(&format!("{prefix}.w1")).unwrap(),
            b1: p.get(&format!("{prefix}.b1")).unwrap(),
            w2: p.get(&format!("{prefix}.w2")).unwrap(),
            b2: p.get(&format!("{prefix}.b2")).unwrap(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Col {
        let h: Col = matvec(self.w1, x)
            .iter()
            .enumerate()
            .map(|(i, v)| (v + self.b1[[i, 0]]).max(0.0))
            .collect();
        matvec(self.w2, &h)
            .iter()
            .enumerate()
            .map(|(i, v)| v + self.b2[[i, 0]])
            .collect()
    }
}

pub struct FusionRef {
    pub t_s: Vec<Col>,
    pub v_s: Vec<Col>,
    pub s_t2o: Col,
    pub s_o2t: Col,
    pub s_m: Col,
}

/// `(1 / |queries|) Σ_q Σ_k cos(q, k) k` over the kept queries and keys.
pub fn aligned_mean(queries: &[Col], keys: &[Col], q_mask: Option<&[bool]>, k_mask: Option<&[bool]>) -> Col {
    let d = keys[0].len();
    let mut acc = vec![0.0; d];
    let mut count = 0usize;
    for (qi, q) in queries.iter().enumerate() {
        if q_mask.is_some_and(|m| !m[qi]) {
            continue;
        }
        count += 1;
        for (ki, k) in keys.iter().enumerate() {
            if k_mask.is_some_and(|m| !m[ki]) {
                continue;
            }
            let c = cosine(q, k);
            for r in 0..d {
                acc[r] += c * k[r];
            }
        }
    }
    if count == 0 {
        return vec![0.0; d];
    }
    scale(&acc, 1.0 / count as f64)
}

#[allow(clippy::too_many_arguments)]
pub fn fusion(
    h: &Array2<f64>,
    o: &Array2<f64>,
    w_h: &Array2<f64>,
    w_o: &Array2<f64>,
    w_t2o: &Array2<f64>,
    w_o2t: &Array2<f64>,
    masks: Option<(&[bool], &[bool])>,
) -> FusionRef {
    let t_s: Vec<Col> = columns(h).iter().map(|c| tanh(&matvec(w_h, c))).collect();
    let v_s: Vec<Col> = columns(o).iter().map(|c| tanh(&matvec(w_o, c))).collect();
    let (tm, om) = match masks {
        Some((t, o)) => (Some(t), Some(o)),
        None => (None, None),
    };
    let s_t2o = aligned_mean(&t_s, &v_s, tm, om);
    let s_o2t = aligned_mean(&v_s, &t_s, om, tm);
    let s_m = add(&tanh(&matvec(w_o2t, &s_o2t)), &tanh(&matvec(w_t2o, &s_t2o)));
    FusionRef {
        t_s,
        v_s,
        s_t2o,
        s_o2t,
        s_m,
    }
}

pub struct SelectionRef {
    pub z: Vec<Col>,
    pub alpha: Col,
    pub y1: Col,
}

pub fn selection(
    s_m: &[f64],
    first_tokens: &[Col],
    w_t: &Array2<f64>,
    w_z: &Array2<f64>,
    w_a: &Array2<f64>,
    mlp: &MlpRef,
    mask: Option<&[bool]>,
) -> SelectionRef {
    let z: Vec<Col> = first_tokens.iter().map(|h| tanh(&matvec(w_t, h))).collect();
    let scores: Col = z
        .iter()
        .map(|zi| {
            let a = concat(&[s_m, &tanh(&matvec(w_z, zi))]);
            let mut s = 0.0;
            for r in 0..a.len() {
                s += w_a[[0, r]] * a[r];
            }
            s
        })
        .collect();
    let alpha = softmax(&scores, mask);
    let mut pooled = vec![0.0; z[0].len()];
    for (i, zi) in z.iter().enumerate() {
        for r in 0..pooled.len() {
            pooled[r] += alpha[i] * zi[r];
        }
    }
    let y1 = mlp.apply(&pooled);
    SelectionRef { z, alpha, y1 }
}

/// Top-k by repeated arg-max over real slots, lowest index on ties.
pub fn top_k(alpha: &[f64], mask: &[bool], k: usize) -> Vec<usize> {
    let mut taken = vec![false; alpha.len()];
    let mut out = Vec::new();
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..alpha.len() {
            if !mask[i] || taken[i] {
                continue;
            }
            if best.is_none_or(|b| alpha[i] > alpha[b]) {
                best = Some(i);
            }
        }
        match best {
            Some(b) => {
                taken[b] = true;
                out.push(b);
            }
            None => break,
        }
    }
    out
}

pub struct NodeRef {
    pub tokens: Array2<f64>,
    pub token_mask: Vec<bool>,
    pub sentence: Col,
}

pub struct ReasoningWeights<'a> {
    pub w_p: &'a Array2<f64>,
    pub w_q: &'a Array2<f64>,
    pub w_token_attn: &'a Array2<f64>,
    pub lambda: MlpRef<'a>,
    pub w_y: &'a Array2<f64>,
    pub w_sig: &'a Array2<f64>,
    pub w_z: &'a Array2<f64>,
}

pub struct GraphRef {
    pub probs: Col,
    pub per_node: Vec<Col>,
    pub significance: Col,
}

fn row_dot(w: &Array2<f64>, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for r in 0..x.len() {
        s += w[[0, r]] * x[r];
    }
    s
}

/// Message from `sender` tokens `p` to a receiver with tokens `q`.
pub fn message(
    p: &[Col],
    p_mask: &[bool],
    q: &[Col],
    q_mask: &[bool],
    fine: &[Col],
    fine_mask: &[bool],
    w_token_attn: &Array2<f64>,
    mask_padding: bool,
) -> Col {
    let keys: Vec<&Col> = fine.iter().chain(q.iter()).collect();
    let key_mask: Vec<bool> = fine_mask.iter().chain(q_mask.iter()).copied().collect();
    let d = p[0].len();
    let mut enriched = Vec::with_capacity(p.len());
    for pi in p {
        let cos: Col = keys.iter().map(|k| cosine(pi, k)).collect();
        let attn = softmax(&cos, mask_padding.then_some(key_mask.as_slice()));
        let mut e = pi.clone();
        for (j, k) in keys.iter().enumerate() {
            for r in 0..d {
                e[r] += attn[j] * k[r];
            }
        }
        enriched.push(e);
    }
    let logits: Col = enriched.iter().map(|e| row_dot(w_token_attn, e)).collect();
    let beta = softmax(&logits, mask_padding.then_some(p_mask));
    let mut z = vec![0.0; d];
    for (i, e) in enriched.iter().enumerate() {
        for r in 0..d {
            z[r] += beta[i] * e[r];
        }
    }
    z
}

pub fn graph(
    nodes: &[NodeRef],
    fine: &[Col],
    fine_mask: &[bool],
    s_m: &[f64],
    w: &ReasoningWeights,
    mask_padding: bool,
) -> GraphRef {
    let senders: Vec<Vec<Col>> = nodes
        .iter()
        .map(|n| columns(&n.tokens).iter().map(|c| tanh(&matvec(w.w_p, c))).collect())
        .collect();
    let receivers: Vec<Vec<Col>> = nodes
        .iter()
        .map(|n| columns(&n.tokens).iter().map(|c| tanh(&matvec(w.w_q, c))).collect())
        .collect();
    let mut per_node = Vec::with_capacity(nodes.len());
    for (qi, q) in nodes.iter().enumerate() {
        let own = tanh(&matvec(w.w_z, &q.sentence));
        let msgs: Vec<Col> = (0..nodes.len())
            .map(|pi| {
                message(
                    &senders[pi],
                    &nodes[pi].token_mask,
                    &receivers[qi],
                    &q.token_mask,
                    fine,
                    fine_mask,
                    w.w_token_attn,
                    mask_padding,
                )
            })
            .collect();
        let scores: Col = msgs
            .iter()
            .map(|m| w.lambda.apply(&concat(&[m, s_m, &own]))[0])
            .collect();
        let lambda = softmax(&scores, None);
        let mut pooled = vec![0.0; s_m.len()];
        for (p, m) in msgs.iter().enumerate() {
            for r in 0..pooled.len() {
                pooled[r] += lambda[p] * m[r];
            }
        }
        let x = concat(&[&pooled, &own, s_m]);
        per_node.push(softmax(&matvec(w.w_y, &x), None));
    }
    let sig_scores: Col = receivers
        .iter()
        .zip(nodes)
        .map(|(rq, n)| {
            let mut pooled = vec![0.0; s_m.len()];
            for (j, f) in fine.iter().enumerate() {
                let cos: Col = rq.iter().map(|t| cosine(f, t)).collect();
                let attn = softmax(&cos, mask_padding.then_some(n.token_mask.as_slice()));
                if mask_padding && !fine_mask[j] {
                    continue;
                }
                for r in 0..pooled.len() {
                    let mut e = f[r];
                    for (i, t) in rq.iter().enumerate() {
                        e += attn[i] * t[r];
                    }
                    pooled[r] += e;
                }
            }
            row_dot(w.w_sig, &pooled)
        })
        .collect();
    let significance = softmax(&sig_scores, None);
    let mut probs = vec![0.0; 4];
    for (q, p) in per_node.iter().enumerate() {
        for c in 0..4 {
            probs[c] += significance[q] * p[c];
        }
    }
    GraphRef {
        probs,
        per_node,
        significance,
    }
}

pub struct ForwardRef {
    pub alpha: Col,
    pub y1: Col,
    pub selected: Vec<usize>,
    pub probs: Col,
}

/// Whole-model reference forward pass.
pub fn forward(params: &Parameters, config: &ModelConfig, input: &ThreadInput) -> ForwardRef {
    let p = |n: &str| params.get(n).unwrap();
    let mask = config.mask_padding;
    let (fine, fine_mask, s_m) = if config.ablation == Ablation::NoV {
        let t_s: Vec<Col> = columns(&input.claim_tokens)
            .iter()
            .map(|c| tanh(&matvec(p(names::W_H), c)))
            .collect();
        let d = t_s[0].len();
        (t_s, input.claim_token_mask.clone(), vec![0.0; d])
    } else {
        let f = fusion(
            &input.claim_tokens,
            &input.claim_objects,
            p(names::W_H),
            p(names::W_O),
            p(names::W_T2O),
            p(names::W_O2T),
            mask.then_some((&input.claim_token_mask[..], &input.claim_object_mask[..])),
        );
        let fine: Vec<Col> = f.t_s.iter().chain(f.v_s.iter()).cloned().collect();
        let fm = input
            .claim_token_mask
            .iter()
            .chain(&input.claim_object_mask)
            .copied()
            .collect();
        (fine, fm, f.s_m)
    };
    let first: Vec<Col> = input.response_tokens.iter().map(|t| column(t, 0)).collect();
    let sel = selection(
        &s_m,
        &first,
        p(names::W_T),
        p(names::W_Z),
        p(names::W_A),
        &MlpRef::from_params(params, "sel_mlp"),
        mask.then_some(input.response_mask.as_slice()),
    );
    let selected = top_k(&sel.alpha, &input.response_mask, config.top_k);
    let probs = if config.ablation == Ablation::NoF {
        softmax(&sel.y1, None)
    } else {
        let nodes: Vec<NodeRef> = if selected.is_empty() {
            vec![NodeRef {
                tokens: input.claim_tokens.clone(),
                token_mask: input.claim_token_mask.clone(),
                sentence: tanh(&matvec(p(names::W_T), &column(&input.claim_tokens, 0))),
            }]
        } else {
            selected
                .iter()
                .map(|&s| NodeRef {
                    tokens: input.response_tokens[s].clone(),
                    token_mask: input.response_token_masks[s].clone(),
                    sentence: sel.z[s].clone(),
                })
                .collect()
        };
        let w = ReasoningWeights {
            w_p: p(names::W_P),
            w_q: p(names::W_Q),
            w_token_attn: p(names::W_TOKEN_ATTN),
            lambda: MlpRef::from_params(params, "lambda_mlp"),
            w_y: p(names::W_Y),
            w_sig: p(names::W_SIG),
            w_z: if config.untie_wz {
                p(names::W_Z_REASON)
            } else {
                p(names::W_Z)
            },
        };
        graph(&nodes, &fine, &fine_mask, &s_m, &w, mask).probs
    };
    ForwardRef {
        alpha: sel.alpha,
        y1: sel.y1,
        selected,
        probs,
    }
}

pub struct MetricsRef {
    pub accuracy: f64,
    pub f1: [f64; 4],
}

/// Accuracy and one-vs-rest F1 counted straight from label lists.
pub fn metrics(truth: &[usize], predicted: &[usize]) -> MetricsRef {
    let n = truth.len();
    let mut correct = 0u64;
    for i in 0..n {
        if truth[i] == predicted[i] {
            correct += 1;
        }
    }
    let mut f1 = [0.0; 4];
    for (c, out) in f1.iter_mut().enumerate() {
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for i in 0..n {
            match (truth[i] == c, predicted[i] == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        *out = if denom == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        };
    }
    MetricsRef {
        accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        f1,
    }
}
