use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::metrics::EvalReport;
use crate::data::{validation_split, FoldSplit, RumorLabel};
use crate::encoders::EncodedThread;
use crate::error::{FormError, Result};
use crate::model::{FormModel, ModelConfig, Prediction, ThreadInput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Share of each training split held out for best-epoch selection.
    pub validation_fraction: f64,
    /// Run the batch sequentially instead of on the rayon pool. Both paths
    /// reduce gradients in batch order and give identical results.
    pub deterministic: bool,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        TrainConfig {
            model,
            learning_rate: 5e-5,
            batch_size: 4,
            epochs: 50,
            seed: 0,
            validation_fraction: 0.1,
            deterministic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(FormError::InvalidParameter("learning rate must be > 0".into()));
        }
        if self.batch_size < 1 {
            return Err(FormError::InvalidParameter("batch size must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(FormError::InvalidParameter(
                "validation fraction must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Encoded threads with their model inputs, addressable by thread id.
#[derive(Debug, Clone)]
pub struct EncodedCorpus {
    threads: Vec<EncodedThread>,
    inputs: Vec<ThreadInput>,
    index: HashMap<String, usize>,
}

impl EncodedCorpus {
    pub fn new(threads: Vec<EncodedThread>) -> Self {
        let inputs = threads.iter().map(ThreadInput::from).collect();
        let index = threads
            .iter()
            .enumerate()
            .map(|(i, t)| (t.thread_id.clone(), i))
            .collect();
        EncodedCorpus { threads, inputs, index }
    }

    pub fn len(&self) -> usize {
        self.threads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.threads.is_empty()
    }

    pub fn thread(&self, i: usize) -> &EncodedThread {
        &self.threads[i]
    }

    pub fn threads(&self) -> &[EncodedThread] {
        &self.threads
    }

    pub fn input(&self, i: usize) -> &ThreadInput {
        &self.inputs[i]
    }

    pub fn label(&self, i: usize) -> RumorLabel {
        self.threads[i].label
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    pub fn indices_of(&self, ids: &[String]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                self.index
                    .get(id)
                    .copied()
                    .ok_or_else(|| FormError::InvalidParameter(format!("thread {id:?} is not in the corpus")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_selection_loss: f64,
    pub mean_reason_loss: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FormModel,
    /// Epoch whose parameters were kept; 0 is the initialization.
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

pub fn predict_all(model: &FormModel, corpus: &EncodedCorpus, indices: &[usize], sequential: bool) -> Vec<Prediction> {
    if sequential {
        indices.iter().map(|&i| model.predict(corpus.input(i))).collect()
    } else {
        indices.par_iter().map(|&i| model.predict(corpus.input(i))).collect()
    }
}

pub fn evaluate(model: &FormModel, corpus: &EncodedCorpus, indices: &[usize], fold_index: Option<usize>) -> EvalReport {
    let preds = predict_all(model, corpus, indices, false);
    let truth: Vec<RumorLabel> = indices.iter().map(|&i| corpus.label(i)).collect();
    let predicted: Vec<RumorLabel> = preds.iter().map(Prediction::label).collect();
    EvalReport::from_predictions(&truth, &predicted, fold_index)
}

fn batch_gradients(
    model: &FormModel,
    corpus: &EncodedCorpus,
    batch: &[usize],
    sequential: bool,
) -> Vec<(super::loss::LossValues, BTreeMap<String, Array2<f64>>)> {
    let run = |&i: &usize| model.loss_and_gradients(corpus.input(i), corpus.label(i));
    if sequential {
        batch.iter().map(run).collect()
    } else {
        batch.par_iter().map(run).collect()
    }
}

/// Trains on `train` with Adam, keeping the parameters of the epoch with the
/// best accuracy on `validation` (the last epoch when `validation` is empty).
/// Kept parameters are rounded to `f32` so checkpoints reload exactly.
pub fn fit(
    corpus: &EncodedCorpus,
    train: &[usize],
    validation: &[usize],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(FormError::EmptyTrainSplit);
    }
    let mut model = FormModel::new(config.model, config.seed)?;
    let mut adam = Adam::new(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x7261_696e));
    let mut order = train.to_vec();
    let mut history = Vec::with_capacity(config.epochs);

    let val_accuracy = |m: &FormModel| (!validation.is_empty()).then(|| evaluate(m, corpus, validation, None).accuracy);
    let mut best = (val_accuracy(&model), 0usize, model.params.clone());

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            let results = batch_gradients(&model, corpus, batch, config.deterministic);
            let mut total: BTreeMap<String, Array2<f64>> = BTreeMap::new();
            for (loss, grads) in results {
                sums.0 += loss.total;
                sums.1 += loss.selection;
                sums.2 += loss.reason;
                for (name, g) in grads {
                    match total.get_mut(&name) {
                        Some(acc) => *acc += &g,
                        None => {
                            total.insert(name, g);
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in total.values_mut() {
                *g *= scale;
            }
            adam.step(&mut model.params, &total);
        }
        let n = train.len() as f64;
        let acc = val_accuracy(&model);
        history.push(EpochStats {
            epoch,
            mean_loss: sums.0 / n,
            mean_selection_loss: sums.1 / n,
            mean_reason_loss: sums.2 / n,
            validation_accuracy: acc,
        });
        log::debug!("epoch {epoch}: loss {:.4} val {:?}", sums.0 / n, acc);
        let improved = match (acc, best.0) {
            (Some(a), Some(b)) => a > b,
            _ => true,
        };
        if improved {
            best = (acc, epoch, model.params.clone());
        }
    }

    let (_, best_epoch, params) = best;
    model.params = params;
    model.params.round_to_f32();
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
    })
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub model: FormModel,
    pub report: EvalReport,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

/// Trains on a fold's training ids (minus a stratified validation share)
/// and evaluates on its test ids.
pub fn train_fold(corpus: &EncodedCorpus, fold: &FoldSplit, config: &TrainConfig) -> Result<FoldOutcome> {
    let train_all = corpus.indices_of(&fold.train_ids)?;
    if train_all.is_empty() {
        return Err(FormError::EmptyTrainSplit);
    }
    let test = corpus.indices_of(&fold.test_ids)?;
    let labels: Vec<RumorLabel> = train_all.iter().map(|&i| corpus.label(i)).collect();
    let (tr, val) = validation_split(
        &labels,
        config.validation_fraction,
        config.seed.wrapping_add(fold.fold_index as u64),
    );
    let train: Vec<usize> = tr.iter().map(|&j| train_all[j]).collect();
    let validation: Vec<usize> = val.iter().map(|&j| train_all[j]).collect();
    let outcome = fit(corpus, &train, &validation, config)?;
    let report = evaluate(&outcome.model, corpus, &test, Some(fold.fold_index));
    Ok(FoldOutcome {
        model: outcome.model,
        report,
        best_epoch: outcome.best_epoch,
        history: outcome.history,
    })
}
