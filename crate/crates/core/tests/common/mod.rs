#![allow(dead_code)]

pub mod checks;
pub mod gradcheck;
pub mod oracle;

use form_core::autograd::Tape;
use form_core::data::remove_retweets;
use form_core::model::fusion::FusedClaim;
use form_core::model::reasoning::{GraphNode, ReasoningParams};
use form_core::model::selection::Mlp;
use form_core::model::{ModelConfig, ModelDims, ThreadInput};
use form_core::synthetic::{self, SyntheticSpec};
use form_core::{Adapter, EncodedCorpus, PaddingPolicy};
use ndarray::{concatenate, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

/// A mask with `real` leading trues.
pub fn prefix_mask(len: usize, real: usize) -> Vec<bool> {
    (0..len).map(|i| i < real).collect()
}

pub fn dims(text_dim: usize, image_dim: usize, hidden: usize, mlp_hidden: usize) -> ModelDims {
    ModelDims {
        text_dim,
        image_dim,
        hidden,
        mlp_hidden,
    }
}

/// Random thread input with trailing padding. Padded token columns share
/// one value, padded objects are all ones and padded slots are all padding.
pub fn random_input(
    rng: &mut ChaCha8Rng,
    dims: &ModelDims,
    n: usize,
    m: usize,
    k: usize,
    real_responses: usize,
) -> ThreadInput {
    let pad = uniform(rng, dims.text_dim, 1, 1.0);
    let tokens = |rng: &mut ChaCha8Rng, real: usize| {
        let mut t = uniform(rng, dims.text_dim, m, 1.0);
        for c in real..m {
            t.column_mut(c).assign(&pad.column(0));
        }
        t
    };
    let claim_real = rng.random_range(1..=m);
    let claim_tokens = tokens(rng, claim_real);
    let obj_real = rng.random_range(0..=k);
    let mut claim_objects = uniform(rng, dims.image_dim, k, 1.0);
    for c in obj_real..k {
        claim_objects.column_mut(c).fill(1.0);
    }
    let mut response_tokens = Vec::with_capacity(n);
    let mut response_token_masks = Vec::with_capacity(n);
    for slot in 0..n {
        let real = if slot < real_responses {
            rng.random_range(1..=m)
        } else {
            0
        };
        response_tokens.push(tokens(rng, real));
        response_token_masks.push(prefix_mask(m, real));
    }
    ThreadInput {
        claim_tokens,
        claim_token_mask: prefix_mask(m, claim_real),
        claim_objects,
        claim_object_mask: prefix_mask(k, obj_real),
        response_tokens,
        response_token_masks,
        response_mask: prefix_mask(n, real_responses),
    }
}

/// Toy dimensions used by the training-based checks.
pub const TOY_TEXT_DIM: usize = 64;
pub const TOY_IMAGE_DIM: usize = 16;

pub fn toy_dims() -> ModelDims {
    dims(TOY_TEXT_DIM, TOY_IMAGE_DIM, 64, 32)
}

pub fn toy_policy() -> PaddingPolicy {
    PaddingPolicy::new(10, 10, 8).unwrap()
}

pub fn toy_config(top_k: usize) -> ModelConfig {
    ModelConfig::new(toy_dims(), top_k)
}

pub fn encode_synthetic(spec: &SyntheticSpec, policy: &PaddingPolicy) -> (EncodedCorpus, Vec<Vec<usize>>) {
    let corpus = synthetic::generate(spec).unwrap();
    let adapter = Adapter::toy(TOY_TEXT_DIM, TOY_IMAGE_DIM);
    let encoded = corpus
        .threads
        .iter()
        .map(|t| adapter.encode_conversation(&remove_retweets(t), policy).unwrap())
        .collect();
    (EncodedCorpus::new(encoded), corpus.signals)
}

/// Appends padded slots, token columns and object columns whose values are
/// arbitrary, marked as padding.
pub fn with_extra_padding(
    input: &ThreadInput,
    seed: u64,
    extra_n: usize,
    extra_m: usize,
    extra_k: usize,
) -> ThreadInput {
    let mut r = rng(seed);
    let dt = input.claim_tokens.nrows();
    let di = input.claim_objects.nrows();
    let m = input.claim_tokens.ncols() + extra_m;
    let widen = |t: &Array2<f64>, r: &mut rand_chacha::ChaCha8Rng| {
        concatenate![Axis(1), t.view(), uniform(r, dt, extra_m, 2.0).view()]
    };
    let widen_mask = |mask: &[bool]| {
        mask.iter()
            .copied()
            .chain(std::iter::repeat_n(false, extra_m))
            .collect::<Vec<_>>()
    };
    let mut out = input.clone();
    out.claim_tokens = widen(&input.claim_tokens, &mut r);
    out.claim_token_mask = widen_mask(&input.claim_token_mask);
    out.claim_objects = concatenate![
        Axis(1),
        input.claim_objects.view(),
        uniform(&mut r, di, extra_k, 2.0).view()
    ];
    out.claim_object_mask = input
        .claim_object_mask
        .iter()
        .copied()
        .chain(std::iter::repeat_n(false, extra_k))
        .collect();
    out.response_tokens = input.response_tokens.iter().map(|t| widen(t, &mut r)).collect();
    out.response_token_masks = input.response_token_masks.iter().map(|m| widen_mask(m)).collect();
    for _ in 0..extra_n {
        out.response_tokens.push(uniform(&mut r, dt, m, 2.0));
        out.response_token_masks.push(vec![false; m]);
        out.response_mask.push(false);
    }
    out
}

/// Random graph of `g` nodes with partially masked tokens and claim columns.
pub fn random_graph(tape: &Tape, seed: u64, g: usize) -> (Vec<GraphNode>, FusedClaim, ReasoningParams) {
    let mut r = rng(seed);
    let (dt, d, dh, m) = (4, 5, 3, 3);
    let mut c = |rows: usize, cols: usize| tape.constant(uniform(&mut r, rows, cols, 1.0));
    let fine = c(d, 4);
    let fused = FusedClaim {
        fine,
        fine_mask: vec![true, true, true, false],
        coarse: c(d, 1),
        tokens: fine,
        objects: None,
    };
    let nodes = (0..g)
        .map(|i| GraphNode {
            slot: Some(i),
            tokens: c(dt, m),
            token_mask: vec![true, i % 2 == 0, false],
            sentence: c(dt, 1),
        })
        .collect();
    let params = ReasoningParams {
        w_p: c(d, dt),
        w_q: c(d, dt),
        w_token_attn: c(1, d),
        lambda: Mlp {
            w1: c(dh, 3 * d),
            b1: c(dh, 1),
            w2: c(1, dh),
            b2: c(1, 1),
        },
        w_y: c(4, 3 * d),
        w_sig: c(1, d),
        w_z: c(d, dt),
    };
    (nodes, fused, params)
}
