//! Largest absolute deviation between the vectorized passes and the
//! explicit-loop oracles, per random case.

use super::oracle::{self, Col, MlpRef, NodeRef, ReasoningWeights};
use super::{dims, prefix_mask, random_input, rng, uniform};
use form_core::autograd::Tape;
use form_core::model::fusion::{self, FusedClaim};
use form_core::model::reasoning::{graph_predict, GraphNode, ReasoningParams};
use form_core::model::selection::{aux_predict, score_responses, Mlp};
use form_core::model::{Ablation, FormModel, ModelConfig};
use ndarray::Array2;
use rand::Rng;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn flat(a: &Array2<f64>) -> Col {
    // column-major so a d × 1 column reads naturally
    let mut out = Vec::with_capacity(a.len());
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            out.push(a[[i, j]]);
        }
    }
    out
}

fn random_mask(rng: &mut rand_chacha::ChaCha8Rng, len: usize, at_least: usize) -> Vec<bool> {
    let real = rng.random_range(at_least..=len);
    prefix_mask(len, real)
}

pub fn fusion_error(seed: u64) -> f64 {
    let mut err = 0.0f64;
    {
        let mut r = rng(seed);
        let (dt, di, d) = (r.random_range(2..7), r.random_range(2..6), r.random_range(2..7));
        let (m, k) = (r.random_range(1..6), r.random_range(1..5));
        let h = uniform(&mut r, dt, m, 1.0);
        let o = uniform(&mut r, di, k, 1.0);
        let w_h = uniform(&mut r, d, dt, 0.8);
        let w_o = uniform(&mut r, d, di, 0.8);
        let w_t2o = uniform(&mut r, d, d, 0.8);
        let w_o2t = uniform(&mut r, d, d, 0.8);
        let tm = random_mask(&mut r, m, 0);
        let om = random_mask(&mut r, k, 0);
        let masks = (seed % 2 == 1).then_some((&tm[..], &om[..]));

        let tape = Tape::new();
        let c = |a: &Array2<f64>| tape.constant(a.clone());
        let (t_s, v_s) = fusion::project_modalities(&tape, c(&h), c(&o), c(&w_h), c(&w_o));
        let s_t2o = fusion::cross_align_text_to_image(&tape, t_s, v_s, masks);
        let s_o2t = fusion::cross_align_image_to_text(&tape, v_s, t_s, masks.map(|(a, b)| (b, a)));
        let s_m = fusion::fuse(&tape, s_t2o, s_o2t, c(&w_t2o), c(&w_o2t));

        let want = oracle::fusion(&h, &o, &w_h, &w_o, &w_t2o, &w_o2t, masks);
        err = err.max(max_diff(&flat(&tape.value(t_s)), &want.t_s.concat()));
        err = err.max(max_diff(&flat(&tape.value(v_s)), &want.v_s.concat()));
        err = err.max(max_diff(&flat(&tape.value(s_t2o)), &want.s_t2o));
        err = err.max(max_diff(&flat(&tape.value(s_o2t)), &want.s_o2t));
        err = err.max(max_diff(&flat(&tape.value(s_m)), &want.s_m));
    }
    err
}

pub fn selection_error(seed: u64) -> f64 {
    let mut err = 0.0f64;
    {
        let mut r = rng(100 + seed);
        let (dt, d, dh, n) = (
            r.random_range(2..7),
            r.random_range(2..7),
            r.random_range(1..5),
            r.random_range(1..8),
        );
        let s_m = uniform(&mut r, d, 1, 1.0);
        let first = uniform(&mut r, dt, n, 1.5);
        let w_t = uniform(&mut r, dt, dt, 0.8);
        let w_z = uniform(&mut r, d, dt, 0.8);
        let w_a = uniform(&mut r, 1, 2 * d, 1.5);
        let (w1, b1) = (uniform(&mut r, dh, dt, 0.8), uniform(&mut r, dh, 1, 0.3));
        let (w2, b2) = (uniform(&mut r, 4, dh, 0.8), uniform(&mut r, 4, 1, 0.3));
        let mask = random_mask(&mut r, n, 1);
        let masked = seed % 2 == 1;

        let tape = Tape::new();
        let c = |a: &Array2<f64>| tape.constant(a.clone());
        let z = tape.matmul(c(&w_t), c(&first));
        let z = tape.tanh(z);
        let alpha = score_responses(&tape, c(&s_m), z, c(&w_z), c(&w_a), masked.then_some(mask.as_slice()));
        let mlp = Mlp {
            w1: c(&w1),
            b1: c(&b1),
            w2: c(&w2),
            b2: c(&b2),
        };
        let y1 = aux_predict(&tape, alpha, z, &mlp);

        let mref = MlpRef {
            w1: &w1,
            b1: &b1,
            w2: &w2,
            b2: &b2,
        };
        let want = oracle::selection(
            &flat(&s_m),
            &oracle::columns(&first),
            &w_t,
            &w_z,
            &w_a,
            &mref,
            masked.then_some(mask.as_slice()),
        );
        err = err.max(max_diff(&flat(&tape.value(alpha)), &want.alpha));
        err = err.max(max_diff(&flat(&tape.value(y1)), &want.y1));
    }
    err
}

pub fn reasoning_error(seed: u64) -> f64 {
    let mut err = 0.0f64;
    {
        let mut r = rng(200 + seed);
        let (dt, d, dh) = (r.random_range(2..6), r.random_range(2..6), r.random_range(1..5));
        let (m, fine_cols, g) = (r.random_range(1..5), r.random_range(1..6), r.random_range(1..5));
        let mask_padding = seed % 2 == 1;
        let fine = uniform(&mut r, d, fine_cols, 1.0);
        let fine_mask = random_mask(&mut r, fine_cols, 0);
        let s_m = uniform(&mut r, d, 1, 1.0);
        let node_data: Vec<(Array2<f64>, Vec<bool>, Array2<f64>)> = (0..g)
            .map(|_| {
                let t = uniform(&mut r, dt, m, 1.0);
                let mask = random_mask(&mut r, m, 1);
                let s = uniform(&mut r, dt, 1, 1.0);
                (t, mask, s)
            })
            .collect();
        let w_p = uniform(&mut r, d, dt, 0.9);
        let w_q = uniform(&mut r, d, dt, 0.9);
        let w_ta = uniform(&mut r, 1, d, 1.2);
        let (lw1, lb1) = (uniform(&mut r, dh, 3 * d, 0.7), uniform(&mut r, dh, 1, 0.3));
        let (lw2, lb2) = (uniform(&mut r, 1, dh, 0.7), uniform(&mut r, 1, 1, 0.3));
        let w_y = uniform(&mut r, 4, 3 * d, 0.9);
        let w_sig = uniform(&mut r, 1, d, 0.9);
        let w_z = uniform(&mut r, d, dt, 0.9);

        let tape = Tape::new();
        let c = |a: &Array2<f64>| tape.constant(a.clone());
        let fine_v = c(&fine);
        let fused = FusedClaim {
            fine: fine_v,
            fine_mask: fine_mask.clone(),
            coarse: c(&s_m),
            tokens: fine_v,
            objects: None,
        };
        let nodes: Vec<GraphNode> = node_data
            .iter()
            .enumerate()
            .map(|(i, (t, mask, s))| GraphNode {
                slot: Some(i),
                tokens: c(t),
                token_mask: mask.clone(),
                sentence: c(s),
            })
            .collect();
        let params = ReasoningParams {
            w_p: c(&w_p),
            w_q: c(&w_q),
            w_token_attn: c(&w_ta),
            lambda: Mlp {
                w1: c(&lw1),
                b1: c(&lb1),
                w2: c(&lw2),
                b2: c(&lb2),
            },
            w_y: c(&w_y),
            w_sig: c(&w_sig),
            w_z: c(&w_z),
        };
        let out = graph_predict(&tape, &nodes, &fused, &params, mask_padding);

        let refs: Vec<NodeRef> = node_data
            .iter()
            .map(|(t, mask, s)| NodeRef {
                tokens: t.clone(),
                token_mask: mask.clone(),
                sentence: flat(s),
            })
            .collect();
        let weights = ReasoningWeights {
            w_p: &w_p,
            w_q: &w_q,
            w_token_attn: &w_ta,
            lambda: MlpRef {
                w1: &lw1,
                b1: &lb1,
                w2: &lw2,
                b2: &lb2,
            },
            w_y: &w_y,
            w_sig: &w_sig,
            w_z: &w_z,
        };
        let want = oracle::graph(
            &refs,
            &oracle::columns(&fine),
            &fine_mask,
            &flat(&s_m),
            &weights,
            mask_padding,
        );
        err = err.max(max_diff(&flat(&tape.value(out.probs)), &want.probs));
        err = err.max(max_diff(&flat(&tape.value(out.per_node)), &want.per_node.concat()));
        err = err.max(max_diff(&flat(&tape.value(out.significance)), &want.significance));
    }
    err
}

pub fn forward_error(seed: u64) -> f64 {
    let mut err = 0.0f64;
    {
        let mut r = rng(300 + seed);
        let model_dims = dims(
            r.random_range(3..6),
            r.random_range(2..5),
            r.random_range(2..6),
            r.random_range(1..4),
        );
        let (n, m, k) = (r.random_range(1..6), r.random_range(1..5), r.random_range(1..4));
        let real = r.random_range(0..=n);
        let input = random_input(&mut r, &model_dims, n, m, k, real);
        let mut config = ModelConfig::new(model_dims, r.random_range(1..5));
        config.ablation = Ablation::ALL[seed as usize % 4];
        config.mask_padding = seed.is_multiple_of(3);
        config.untie_wz = seed % 5 == 1;
        let model = FormModel::new(config, seed).unwrap();
        let got = model.predict(&input);
        let want = oracle::forward(&model.params, &config, &input);
        err = err.max(max_diff(&got.alpha, &want.alpha));
        err = err.max(max_diff(&got.y1_logits, &want.y1));
        if got.selected != want.selected {
            return f64::INFINITY;
        }
        err = err.max(max_diff(&got.probs, &want.probs));
    }
    err
}
