use form_core::data::{truncate_and_mark, Claim, ConversationThread, ResponseTweet};
use form_core::encoders::{sentence_of, FeatureCache};
use form_core::{Adapter, PaddingPolicy, RumorLabel};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

/// Recomputed from the documented recipe: SHA-256 of the key seeds a
/// ChaCha8 stream of standard normals scaled by 1/√d.
fn expected_embedding(key: &str, dim: usize) -> Vec<f32> {
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&Sha256::digest(key.as_bytes()));
    let mut rng = ChaCha8Rng::from_seed(seed);
    (0..dim)
        .map(|_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            (v / (dim as f64).sqrt()) as f32
        })
        .collect()
}

#[test]
fn toy_columns_follow_the_hash_recipe() {
    let dim = 6;
    let adapter = Adapter::toy(dim, 3);
    let enc = adapter.encode_text("a b", 5).unwrap();
    let (cls, a, b, pad) = (
        expected_embedding("[CLS]", dim),
        expected_embedding("a", dim),
        expected_embedding("b", dim),
        expected_embedding("[PAD]", dim),
    );
    for r in 0..dim {
        let first = cls[r] + a[r] * 0.5 + b[r] * 0.5;
        assert!((enc.matrix[[r, 0]] - first).abs() < 1e-6);
        assert_eq!(enc.matrix[[r, 1]], a[r]);
        assert_eq!(enc.matrix[[r, 2]], b[r]);
        assert_eq!(enc.matrix[[r, 3]], pad[r]);
        assert_eq!(enc.matrix[[r, 4]], pad[r]);
    }
    assert_eq!(enc.mask, vec![true, true, true, false, false]);
}

#[test]
fn sentence_feature_matches_dense_oracle() {
    let adapter = Adapter::toy(4, 2);
    let enc = adapter.encode_text("hello there world", 6).unwrap();
    let w = Array2::from_shape_fn((4, 4), |(i, j)| ((i * 5 + j) as f64 * 0.37).sin());
    let got = sentence_of(&enc, &w);
    for i in 0..4 {
        let mut acc = 0.0;
        for j in 0..4 {
            acc += w[[i, j]] * f64::from(enc.matrix[[j, 0]]);
        }
        assert!((got[i] - acc.tanh()).abs() < 1e-12);
    }
}

fn thread(n: usize) -> ConversationThread {
    ConversationThread {
        claim: Claim {
            id: "t1".into(),
            text: "claim text here".into(),
            image_path: None,
        },
        responses: (0..n)
            .map(|i| ResponseTweet {
                id: format!("r{i}"),
                text: format!("reply number {i}"),
                timestamp: Some(i as i64),
            })
            .collect(),
        label: RumorLabel::Unverified,
    }
}

#[test]
fn empty_thread_encodes_to_padding() {
    let adapter = Adapter::toy(5, 3);
    let policy = PaddingPolicy::new(4, 6, 3).unwrap();
    let e = adapter.encode_conversation(&thread(0), &policy).unwrap();
    assert_eq!(e.response_mask, vec![false; 4]);
    let z = e.response_first_tokens();
    for c in 1..4 {
        assert_eq!(z.column(c), z.column(0));
    }
    assert!(e.claim_objects.matrix.iter().all(|&v| v == 1.0));
    assert!(e.claim_objects.mask.iter().all(|&m| !m));
}

#[test]
fn shapes_and_masks_follow_policy() {
    let adapter = Adapter::toy(5, 3);
    let policy = PaddingPolicy::new(100, 35, 36).unwrap();
    let e = adapter.encode_conversation(&thread(3), &policy).unwrap();
    assert_eq!(e.response_mask.iter().filter(|&&m| m).count(), 3);
    assert_eq!(e.claim_tokens.matrix.dim(), (5, 35));
    assert_eq!(e.claim_objects.matrix.dim(), (3, 36));
    assert_eq!(e.response_tokens.len(), 100);
    assert!(e.response_tokens.iter().all(|t| t.matrix.dim() == (5, 35)));
}

#[test]
fn long_threads_are_truncated_to_the_first_responses() {
    let policy = PaddingPolicy::new(2, 8, 2).unwrap();
    let t = truncate_and_mark(&thread(5), &policy);
    assert_eq!(t.real_slots(), 2);
    let e = Adapter::toy(4, 2).encode_thread(&t, &policy).unwrap();
    assert_eq!(e.response_ids, vec!["r0".to_string(), "r1".to_string()]);
}

#[test]
fn cache_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let cache = FeatureCache::new(dir.path()).unwrap();
    let adapter = Adapter::toy(6, 4);
    let policy = PaddingPolicy::new(5, 7, 3).unwrap();
    let e = adapter.encode_conversation(&thread(4), &policy).unwrap();
    cache.put(&e, adapter.id(), &policy).unwrap();
    let back = cache.get("t1", adapter.id(), &policy).unwrap().unwrap();
    assert_eq!(back, e);
    assert!(cache.get("t1", "other-adapter", &policy).unwrap().is_none());
}
