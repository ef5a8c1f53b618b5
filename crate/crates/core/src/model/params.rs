use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::error::{FormError, Result};

pub const NUM_CLASSES: usize = 4;

/// Parameter names as stored in checkpoints.
pub mod names {
    pub const W_T: &str = "w_t";
    pub const W_O: &str = "w_o";
    pub const W_H: &str = "w_h";
    pub const W_T2O: &str = "w_t2o";
    pub const W_O2T: &str = "w_o2t";
    pub const W_Z: &str = "w_z";
    pub const W_A: &str = "w_a";
    pub const SEL_W1: &str = "sel_mlp.w1";
    pub const SEL_B1: &str = "sel_mlp.b1";
    pub const SEL_W2: &str = "sel_mlp.w2";
    pub const SEL_B2: &str = "sel_mlp.b2";
    pub const W_P: &str = "w_p";
    pub const W_Q: &str = "w_q";
    pub const W_TOKEN_ATTN: &str = "w_token_attn";
    pub const LAMBDA_W1: &str = "lambda_mlp.w1";
    pub const LAMBDA_B1: &str = "lambda_mlp.b1";
    pub const LAMBDA_W2: &str = "lambda_mlp.w2";
    pub const LAMBDA_B2: &str = "lambda_mlp.b2";
    pub const W_Y: &str = "w_y";
    pub const W_SIG: &str = "w_sig";
    pub const W_Z_REASON: &str = "w_z_reason";

    pub const VISUAL: [&str; 3] = [W_O, W_T2O, W_O2T];
    pub const REASONING: [&str; 10] = [
        W_P,
        W_Q,
        W_TOKEN_ATTN,
        LAMBDA_W1,
        LAMBDA_B1,
        LAMBDA_W2,
        LAMBDA_B2,
        W_Y,
        W_SIG,
        W_Z_REASON,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// `d_t`
    pub text_dim: usize,
    /// `d_i`
    pub image_dim: usize,
    /// `d`, the shared projection width.
    pub hidden: usize,
    /// `d_h`, the hidden width of both MLPs.
    pub mlp_hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            text_dim: 768,
            image_dim: 2048,
            hidden: 768,
            mlp_hidden: 128,
        }
    }
}

/// Model variants for the component study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    None,
    /// Text-only claim.
    NoV,
    /// Aux head replaces relation-attention reasoning.
    NoF,
    /// Selection loss dropped.
    NoS,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::None, Ablation::NoV, Ablation::NoF, Ablation::NoS];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoV => "no-v",
            Ablation::NoF => "no-f",
            Ablation::NoS => "no-s",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = FormError;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| {
            FormError::InvalidParameter(format!("unknown ablation {s:?}; expected none, no-v, no-f or no-s"))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dims: ModelDims,
    pub top_k: usize,
    pub ablation: Ablation,
    /// Exclude padded tokens, objects and responses from every reduction.
    pub mask_padding: bool,
    /// Separate sentence projection for the reasoning stage.
    pub untie_wz: bool,
}

impl ModelConfig {
    pub fn new(dims: ModelDims, top_k: usize) -> Self {
        ModelConfig {
            dims,
            top_k,
            ablation: Ablation::None,
            mask_padding: false,
            untie_wz: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_k < 1 {
            return Err(FormError::InvalidParameter("top-k must be ≥ 1".into()));
        }
        let d = self.dims;
        if d.text_dim == 0 || d.image_dim == 0 || d.hidden == 0 || d.mlp_hidden == 0 {
            return Err(FormError::InvalidParameter("model dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Names and shapes of every parameter this configuration owns.
    pub fn parameter_shapes(&self) -> Vec<(&'static str, (usize, usize))> {
        use names::*;
        let ModelDims {
            text_dim: dt,
            image_dim: di,
            hidden: d,
            mlp_hidden: dh,
        } = self.dims;
        let mut shapes = vec![
            (W_T, (dt, dt)),
            (W_H, (d, dt)),
            (W_Z, (d, dt)),
            (W_A, (1, 2 * d)),
            (SEL_W1, (dh, dt)),
            (SEL_B1, (dh, 1)),
            (SEL_W2, (NUM_CLASSES, dh)),
            (SEL_B2, (NUM_CLASSES, 1)),
        ];
        if self.ablation != Ablation::NoV {
            shapes.extend([(W_O, (d, di)), (W_T2O, (d, d)), (W_O2T, (d, d))]);
        }
        if self.ablation != Ablation::NoF {
            shapes.extend([
                (W_P, (d, dt)),
                (W_Q, (d, dt)),
                (W_TOKEN_ATTN, (1, d)),
                (LAMBDA_W1, (dh, 3 * d)),
                (LAMBDA_B1, (dh, 1)),
                (LAMBDA_W2, (1, dh)),
                (LAMBDA_B2, (1, 1)),
                (W_Y, (NUM_CLASSES, 3 * d)),
                (W_SIG, (1, d)),
            ]);
            if self.untie_wz {
                shapes.push((W_Z_REASON, (d, dt)));
            }
        }
        shapes.sort_by_key(|(n, _)| *n);
        shapes
    }
}

fn is_bias(name: &str) -> bool {
    name.ends_with(".b1") || name.ends_with(".b2")
}

/// Named parameter matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    entries: BTreeMap<String, Array2<f64>>,
}

impl Parameters {
    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = config
            .parameter_shapes()
            .into_iter()
            .map(|(name, (rows, cols))| {
                let value = if is_bias(name) {
                    Array2::zeros((rows, cols))
                } else {
                    let bound = 1.0 / (cols as f64).sqrt();
                    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
                };
                (name.to_string(), value)
            })
            .collect();
        Parameters { entries }
    }

    pub fn from_entries(entries: BTreeMap<String, Array2<f64>>) -> Self {
        Parameters { entries }
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.entries.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) {
        self.entries.insert(name.into(), value);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array2<f64>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|a| a.len()).sum()
    }

    /// Rounds every entry to the nearest `f32`, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for v in self.entries.values_mut() {
            v.mapv_inplace(|x| x as f32 as f64);
        }
    }

    /// Checks names and shapes against what `config` requires.
    pub fn check_against(&self, config: &ModelConfig) -> Result<()> {
        let expected = config.parameter_shapes();
        for (name, shape) in &expected {
            match self.entries.get(*name) {
                None => {
                    return Err(FormError::CheckpointMismatch {
                        name: name.to_string(),
                        message: "missing".into(),
                    })
                }
                Some(v) if v.dim() != *shape => {
                    return Err(FormError::CheckpointMismatch {
                        name: name.to_string(),
                        message: format!("shape {:?}, expected {:?}", v.dim(), shape),
                    })
                }
                _ => {}
            }
        }
        if let Some(extra) = self.entries.keys().find(|k| !expected.iter().any(|(n, _)| n == k)) {
            return Err(FormError::CheckpointMismatch {
                name: extra.clone(),
                message: "not used by this model configuration".into(),
            });
        }
        Ok(())
    }

    /// Puts every parameter on `tape`, as variables when `trainable`.
    pub fn bind(&self, tape: &Tape, trainable: bool) -> BoundParams {
        let vars = self
            .entries
            .iter()
            .map(|(k, v)| {
                let var = if trainable {
                    tape.variable(v.clone())
                } else {
                    tape.constant(v.clone())
                };
                (k.clone(), var)
            })
            .collect();
        BoundParams { vars }
    }
}

/// Parameters placed on a tape.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name:?} is not part of this model"))
    }

    pub fn try_get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}
