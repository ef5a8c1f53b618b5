use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::data::RumorLabel;
use crate::error::{FormError, Result};
use crate::model::{Ablation, NUM_CLASSES};

/// Smallest probability fed to the logarithm of the reasoning loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub total: f64,
    pub selection: f64,
    pub reason: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub selection: Var,
    pub reason: Var,
}

/// Selection loss on the auxiliary logits plus reasoning loss on the graph
/// distribution. The selection term is dropped from the total under
/// [`Ablation::NoS`] but still reported.
pub fn loss_on_tape(tape: &Tape, y1_logits: Var, probs: Var, label: RumorLabel, ablation: Ablation) -> LossVars {
    let selection = tape.cross_entropy_logits(y1_logits, label.index());
    let reason = tape.neg_log_prob(probs, label.index(), PROB_FLOOR);
    let total = if ablation == Ablation::NoS {
        reason
    } else {
        tape.add(selection, reason)
    };
    LossVars {
        total,
        selection,
        reason,
    }
}

/// Plain-value form of the joint loss.
pub fn compute_loss(y1_logits: &[f64], graph_probs: &[f64], label: usize) -> Result<LossValues> {
    if label >= NUM_CLASSES || y1_logits.len() != NUM_CLASSES || graph_probs.len() != NUM_CLASSES {
        return Err(FormError::LabelOutOfRange(label));
    }
    let max = y1_logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + y1_logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let selection = lse - y1_logits[label];
    let reason = -graph_probs[label].max(PROB_FLOOR).ln();
    Ok(LossValues {
        total: selection + reason,
        selection,
        reason,
    })
}
