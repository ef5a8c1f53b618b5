//! Cross-validation, ablation and top-k sweep drivers plus their reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{ConfusionMatrix, EvalReport};
use super::trainer::{train_fold, EncodedCorpus, FoldOutcome, TrainConfig};
use crate::data::{FoldSplit, RumorLabel};
use crate::error::{FormError, Result};
use crate::model::{Ablation, FormModel};

/// Per-fold reports with both mean-over-folds and pooled scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub per_fold: Vec<EvalReport>,
    pub best_epochs: Vec<usize>,
    pub mean_accuracy: f64,
    pub mean_f1: BTreeMap<RumorLabel, f64>,
    /// Scores over the concatenated test predictions of all folds.
    pub pooled: EvalReport,
}

impl CvReport {
    pub fn from_folds(per_fold: Vec<EvalReport>, best_epochs: Vec<usize>) -> Self {
        let n = per_fold.len().max(1) as f64;
        let mean_accuracy = per_fold.iter().map(|r| r.accuracy).sum::<f64>() / n;
        let mean_f1 = RumorLabel::ALL
            .into_iter()
            .map(|l| (l, per_fold.iter().map(|r| r.f1(l)).sum::<f64>() / n))
            .collect();
        let mut pooled = ConfusionMatrix::default();
        for r in &per_fold {
            pooled.merge(&r.confusion);
        }
        CvReport {
            per_fold,
            best_epochs,
            mean_accuracy,
            mean_f1,
            pooled: EvalReport::from_confusion(pooled, None),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CvRun {
    pub report: CvReport,
    pub models: Vec<FormModel>,
}

pub fn cross_validate(corpus: &EncodedCorpus, folds: &[FoldSplit], config: &TrainConfig) -> Result<CvRun> {
    if folds.is_empty() {
        return Err(FormError::InvalidParameter("no folds given".into()));
    }
    let mut reports = Vec::with_capacity(folds.len());
    let mut epochs = Vec::with_capacity(folds.len());
    let mut models = Vec::with_capacity(folds.len());
    for fold in folds {
        let FoldOutcome {
            model,
            report,
            best_epoch,
            ..
        } = train_fold(corpus, fold, config)?;
        log::info!(
            "fold {}: accuracy {:.4} (best epoch {best_epoch})",
            fold.fold_index,
            report.accuracy
        );
        reports.push(report);
        epochs.push(best_epoch);
        models.push(model);
    }
    Ok(CvRun {
        report: CvReport::from_folds(reports, epochs),
        models,
    })
}

/// Runs the full model and each ablation variant under the same folds.
pub fn run_ablations(
    corpus: &EncodedCorpus,
    folds: &[FoldSplit],
    config: &TrainConfig,
) -> Result<Vec<(Ablation, CvReport)>> {
    Ablation::ALL
        .into_iter()
        .map(|ablation| {
            let mut cfg = *config;
            cfg.model.ablation = ablation;
            Ok((ablation, cross_validate(corpus, folds, &cfg)?.report))
        })
        .collect()
}

/// Drops repeated values, keeping first occurrences in order.
pub fn dedup_k_values(k_values: &[usize]) -> Vec<usize> {
    let mut seen = Vec::new();
    for &k in k_values {
        if !seen.contains(&k) {
            seen.push(k);
        }
    }
    seen
}

pub fn sweep_top_k(
    corpus: &EncodedCorpus,
    folds: &[FoldSplit],
    config: &TrainConfig,
    k_values: &[usize],
) -> Result<Vec<(usize, CvReport)>> {
    let ks = dedup_k_values(k_values);
    if ks.is_empty() {
        return Err(FormError::InvalidParameter("k values must be non-empty".into()));
    }
    ks.into_iter()
        .map(|k| {
            let mut cfg = *config;
            cfg.model.top_k = k;
            cfg.model.validate()?;
            Ok((k, cross_validate(corpus, folds, &cfg)?.report))
        })
        .collect()
}

fn f1_cells(out: &mut String, f1: &BTreeMap<RumorLabel, f64>) {
    for l in RumorLabel::ALL {
        let _ = write!(out, ",{:.6}", f1[&l]);
    }
}

const F1_HEADER: &str = "f1_false,f1_true,f1_unverified,f1_non_rumor";

/// Per-fold metrics followed by `mean` and `pooled` rows.
pub fn per_fold_csv(method: &str, report: &CvReport) -> String {
    let mut out = format!("method,fold,accuracy,{F1_HEADER}\n");
    for r in &report.per_fold {
        let fold = r.fold_index.map(|f| f.to_string()).unwrap_or_default();
        let _ = write!(out, "{method},{fold},{:.6}", r.accuracy);
        f1_cells(&mut out, &r.f1_per_class);
        out.push('\n');
    }
    let _ = write!(out, "{method},mean,{:.6}", report.mean_accuracy);
    f1_cells(&mut out, &report.mean_f1);
    out.push('\n');
    let _ = write!(out, "{method},pooled,{:.6}", report.pooled.accuracy);
    f1_cells(&mut out, &report.pooled.f1_per_class);
    out.push('\n');
    out
}

/// One row per method in the accuracy plus per-class F1 layout, using
/// mean-over-folds scores.
pub fn summary_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a CvReport)>) -> String {
    let mut out = format!("method,accuracy,{F1_HEADER},pooled_accuracy\n");
    for (method, r) in rows {
        let _ = write!(out, "{method},{:.6}", r.mean_accuracy);
        f1_cells(&mut out, &r.mean_f1);
        let _ = writeln!(out, ",{:.6}", r.pooled.accuracy);
    }
    out
}

/// Plot-ready accuracy per k.
pub fn sweep_csv(rows: &[(usize, CvReport)]) -> String {
    let mut out = format!("k,accuracy,pooled_accuracy,{F1_HEADER}\n");
    for (k, r) in rows {
        let _ = write!(out, "{k},{:.6},{:.6}", r.mean_accuracy, r.pooled.accuracy);
        f1_cells(&mut out, &r.mean_f1);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(fold: usize, m: [[u64; 4]; 4]) -> EvalReport {
        EvalReport::from_confusion(ConfusionMatrix(m), Some(fold))
    }

    #[test]
    fn mean_and_pooled_differ_when_folds_are_unequal() {
        let a = report(0, [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]);
        let b = report(1, [[0, 1, 0, 0], [0, 0, 0, 0], [0, 0, 1, 1], [0, 0, 0, 1]]);
        let cv = CvReport::from_folds(vec![a, b], vec![3, 4]);
        assert_eq!(cv.mean_accuracy, (1.0 + 0.5) / 2.0);
        assert_eq!(cv.pooled.accuracy, 4.0 / 6.0);
        assert_eq!(cv.pooled.count(), 6);
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        assert_eq!(dedup_k_values(&[5, 1, 5, 3, 1]), vec![5, 1, 3]);
        assert_eq!(dedup_k_values(&[1]), vec![1]);
    }

    #[test]
    fn csv_shapes() {
        let r = report(0, [[1, 0, 0, 0]; 4]);
        let cv = CvReport::from_folds(vec![r], vec![0]);
        let per = per_fold_csv("form", &cv);
        assert_eq!(per.lines().count(), 1 + 1 + 2);
        let sweep = sweep_csv(&[(1, cv.clone()), (3, cv.clone()), (5, cv.clone()), (10, cv.clone())]);
        assert_eq!(sweep.lines().count(), 5);
        assert!(sweep.lines().nth(4).unwrap().starts_with("10,"));
        let summary = summary_csv([("full", &cv), ("no-f", &cv)]);
        assert_eq!(summary.lines().next().unwrap().split(',').count(), 7);
    }
}
