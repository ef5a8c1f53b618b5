//! Joint training, evaluation, checkpoints and experiment drivers.

pub mod adam;
pub mod checkpoint;
pub mod experiments;
pub mod loss;
pub mod metrics;
pub mod trainer;

pub use adam::Adam;
pub use experiments::{
    cross_validate, dedup_k_values, per_fold_csv, run_ablations, summary_csv, sweep_csv, sweep_top_k, CvReport, CvRun,
};
pub use loss::{compute_loss, LossValues};
pub use metrics::{ConfusionMatrix, EvalReport};
pub use trainer::{
    evaluate, fit, predict_all, train_fold, EncodedCorpus, EpochStats, FoldOutcome, TrainConfig, TrainOutcome,
};
