//! Accuracy, one-vs-rest F1 and confusion matrices.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::RumorLabel;

/// `counts[truth][predicted]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[u64; 4]; 4]);

impl ConfusionMatrix {
    pub fn from_pairs(truth: &[RumorLabel], predicted: &[RumorLabel]) -> Self {
        assert_eq!(truth.len(), predicted.len());
        let mut m = [[0u64; 4]; 4];
        for (t, p) in truth.iter().zip(predicted) {
            m[t.index()][p.index()] += 1;
        }
        ConfusionMatrix(m)
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for i in 0..4 {
            for j in 0..4 {
                self.0[i][j] += other.0[i][j];
            }
        }
    }

    /// `trace / total`, zero for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }

    /// `2TP / (2TP + FP + FN)`; zero when the class never occurs nor is predicted.
    pub fn f1(&self, class: RumorLabel) -> f64 {
        let c = class.index();
        let tp = self.0[c][c];
        let fp: u64 = (0..4).filter(|&t| t != c).map(|t| self.0[t][c]).sum();
        let fn_: u64 = (0..4).filter(|&p| p != c).map(|p| self.0[c][p]).sum();
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fold_index: Option<usize>,
    pub accuracy: f64,
    pub f1_per_class: BTreeMap<RumorLabel, f64>,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix, fold_index: Option<usize>) -> Self {
        EvalReport {
            fold_index,
            accuracy: confusion.accuracy(),
            f1_per_class: RumorLabel::ALL.into_iter().map(|l| (l, confusion.f1(l))).collect(),
            confusion,
        }
    }

    pub fn from_predictions(truth: &[RumorLabel], predicted: &[RumorLabel], fold_index: Option<usize>) -> Self {
        Self::from_confusion(ConfusionMatrix::from_pairs(truth, predicted), fold_index)
    }

    pub fn f1(&self, label: RumorLabel) -> f64 {
        self.f1_per_class[&label]
    }

    pub fn count(&self) -> u64 {
        self.confusion.total()
    }
}
