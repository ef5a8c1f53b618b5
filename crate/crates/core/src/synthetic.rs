//! Planted-signal corpora for desk-scale testing.
//!
//! Each thread gets `n_signal_responses` responses drawn mostly from a
//! class-specific vocabulary (`c{class}_{j}`); the rest are uniform draws
//! from a shared distractor vocabulary (`w{i}`). The claim text carries a
//! weak class signal. Claims have no image.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{write_thread_file, Claim, ConversationThread, ResponseTweet, RumorLabel};
use crate::error::{FormError, Result};

pub const THREADS_FILE: &str = "threads.jsonl";
pub const SIGNALS_FILE: &str = "signals.json";

/// Share of claim tokens drawn from the class vocabulary, per unit of
/// `signal_strength`.
pub const CLAIM_SIGNAL_SHARE: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_threads: usize,
    pub n_classes: usize,
    pub responses_per_thread: usize,
    pub n_signal_responses: usize,
    /// Distractor vocabulary size.
    pub vocab_size: usize,
    /// Words per class vocabulary.
    pub class_vocab_size: usize,
    pub tokens_per_response: usize,
    pub signal_strength: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_threads: 40,
            n_classes: RumorLabel::COUNT,
            responses_per_thread: 10,
            n_signal_responses: 3,
            vocab_size: 200,
            class_vocab_size: 6,
            tokens_per_response: 8,
            signal_strength: 1.0,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FormError::InvalidParameter(m.into()));
        if self.n_classes != RumorLabel::COUNT {
            return bad("synthetic corpora have exactly 4 classes");
        }
        if self.n_threads == 0 || !self.n_threads.is_multiple_of(self.n_classes) {
            return bad("thread count must be a positive multiple of 4");
        }
        if self.n_signal_responses > self.responses_per_thread {
            return bad("signal responses cannot exceed responses per thread");
        }
        if self.vocab_size == 0 || self.class_vocab_size == 0 || self.tokens_per_response == 0 {
            return bad("vocabulary sizes and tokens per response must be ≥ 1");
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return bad("signal strength must be in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub threads: Vec<ConversationThread>,
    /// Response positions carrying class signal, sorted, per thread.
    pub signals: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SignalsFile {
    seed: u64,
    signals: BTreeMap<String, Vec<usize>>,
}

pub fn class_token(class: usize, j: usize) -> String {
    format!("c{class}_{j}")
}

pub fn distractor_token(i: usize) -> String {
    format!("w{i}")
}

fn sentence(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, class: usize, share: f64) -> String {
    (0..spec.tokens_per_response)
        .map(|_| {
            if rng.random_bool(share.clamp(0.0, 1.0)) {
                class_token(class, rng.random_range(0..spec.class_vocab_size))
            } else {
                distractor_token(rng.random_range(0..spec.vocab_size))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let positions: Vec<usize> = (0..spec.responses_per_thread).collect();
    let mut threads = Vec::with_capacity(spec.n_threads);
    let mut signals = Vec::with_capacity(spec.n_threads);
    for t in 0..spec.n_threads {
        let class = t % spec.n_classes;
        let id = format!("syn{}_{t:04}", spec.seed);
        let mut signal: Vec<usize> = positions
            .choose_multiple(&mut rng, spec.n_signal_responses)
            .copied()
            .collect();
        signal.sort_unstable();
        let claim_text = sentence(&mut rng, spec, class, CLAIM_SIGNAL_SHARE * spec.signal_strength);
        let responses = positions
            .iter()
            .map(|&i| {
                let share = if signal.binary_search(&i).is_ok() {
                    spec.signal_strength
                } else {
                    0.0
                };
                ResponseTweet {
                    id: format!("{id}_r{i:03}"),
                    text: sentence(&mut rng, spec, class, share),
                    timestamp: Some(i as i64),
                }
            })
            .collect();
        threads.push(ConversationThread {
            claim: Claim {
                id,
                text: claim_text,
                image_path: None,
            },
            responses,
            label: RumorLabel::from_index(class)?,
        });
        signals.push(signal);
    }
    // Interleave labels so contiguous slices stay roughly balanced.
    let mut order: Vec<usize> = (0..threads.len()).collect();
    order.shuffle(&mut rng);
    let threads = order.iter().map(|&i| threads[i].clone()).collect();
    let signals = order.iter().map(|&i| signals[i].clone()).collect();
    Ok(SyntheticCorpus { threads, signals })
}

/// Writes `threads.jsonl` and `signals.json` into `dir`.
pub fn write_corpus(dir: &Path, spec: &SyntheticSpec, corpus: &SyntheticCorpus) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FormError::io(dir, e))?;
    write_thread_file(&dir.join(THREADS_FILE), &corpus.threads)?;
    let file = SignalsFile {
        seed: spec.seed,
        signals: corpus
            .threads
            .iter()
            .zip(&corpus.signals)
            .map(|(t, s)| (t.id().to_string(), s.clone()))
            .collect(),
    };
    let path = dir.join(SIGNALS_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&file)?).map_err(|e| FormError::io(&path, e))
}

pub fn read_signals(path: &Path) -> Result<BTreeMap<String, Vec<usize>>> {
    let bytes = fs::read(path).map_err(|e| FormError::io(path, e))?;
    let file: SignalsFile = serde_json::from_slice(&bytes)?;
    Ok(file.signals)
}

/// Mean precision of each thread's selected positions against its signal
/// set. A thread with nothing selected scores zero.
pub fn selector_quality(selected: &[Vec<usize>], signals: &[Vec<usize>]) -> f64 {
    assert_eq!(selected.len(), signals.len());
    if selected.is_empty() {
        return 0.0;
    }
    let total: f64 = selected
        .iter()
        .zip(signals)
        .map(|(sel, sig)| {
            if sel.is_empty() {
                0.0
            } else {
                sel.iter().filter(|i| sig.contains(i)).count() as f64 / sel.len() as f64
            }
        })
        .sum();
    total / selected.len() as f64
}
