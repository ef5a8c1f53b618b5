//! Run configuration: flags over config file over defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use form_core::data::DatasetKind;
use form_core::{Ablation, AdapterKind, ModelConfig, ModelDims, PaddingPolicy, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::args::CommonArgs;

/// Every field optional; used for both the config file and the flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub dataset: Option<DatasetKind>,
    pub data_root: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub adapter: Option<AdapterKind>,
    pub adapter_dir: Option<PathBuf>,
    pub toy_text_dim: Option<usize>,
    pub toy_image_dim: Option<usize>,
    pub hidden: Option<usize>,
    pub mlp_hidden: Option<usize>,
    pub max_responses: Option<usize>,
    pub max_tokens: Option<usize>,
    pub max_objects: Option<usize>,
    pub top_k: Option<usize>,
    pub folds: Option<usize>,
    pub fold_file: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub validation_fraction: Option<f64>,
    pub ablation: Option<Ablation>,
    pub mask_padding: Option<bool>,
    pub untie_wz: Option<bool>,
    pub deterministic: Option<bool>,
}

/// Fully resolved configuration, echoed as JSON by every run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub data_root: PathBuf,
    pub cache_dir: PathBuf,
    pub out: PathBuf,
    pub adapter: AdapterKind,
    pub adapter_dir: Option<PathBuf>,
    pub toy_text_dim: usize,
    pub toy_image_dim: usize,
    pub hidden: usize,
    pub mlp_hidden: usize,
    pub max_responses: usize,
    pub max_tokens: usize,
    pub max_objects: usize,
    pub top_k: usize,
    pub folds: usize,
    pub fold_file: Option<PathBuf>,
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub ablation: Ablation,
    pub mask_padding: bool,
    pub untie_wz: bool,
    pub deterministic: bool,
}

pub const CONFIG_ECHO: &str = "config.json";

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn from_flags(a: &CommonArgs) -> Self {
        let flag = |set: bool| set.then_some(true);
        Settings {
            dataset: a.dataset,
            data_root: a.data_root.clone(),
            cache_dir: a.cache_dir.clone(),
            out: a.out.clone(),
            adapter: a.adapter,
            adapter_dir: a.adapter_dir.clone(),
            toy_text_dim: a.toy_text_dim,
            toy_image_dim: a.toy_image_dim,
            hidden: a.hidden,
            mlp_hidden: a.mlp_hidden,
            max_responses: a.max_responses,
            max_tokens: a.max_tokens,
            max_objects: a.max_objects,
            top_k: a.top_k,
            folds: a.folds,
            fold_file: a.fold_file.clone(),
            seed: a.seed,
            epochs: a.epochs,
            lr: a.lr,
            batch_size: a.batch_size,
            validation_fraction: a.validation_fraction,
            ablation: a.ablation,
            mask_padding: flag(a.mask_padding),
            untie_wz: flag(a.untie_wz),
            deterministic: flag(a.deterministic),
        }
    }

    /// Fields set in `self` win over those in `lower`.
    pub fn over(self, lower: Settings) -> Settings {
        macro_rules! pick {
            ($($f:ident),*) => { Settings { $($f: self.$f.or(lower.$f)),* } };
        }
        pick!(
            dataset,
            data_root,
            cache_dir,
            out,
            adapter,
            adapter_dir,
            toy_text_dim,
            toy_image_dim,
            hidden,
            mlp_hidden,
            max_responses,
            max_tokens,
            max_objects,
            top_k,
            folds,
            fold_file,
            seed,
            epochs,
            lr,
            batch_size,
            validation_fraction,
            ablation,
            mask_padding,
            untie_wz,
            deterministic
        )
    }

    pub fn resolve(self) -> Result<RunConfig> {
        let dataset = self.dataset.unwrap_or(DatasetKind::Custom);
        let adapter = self.adapter.unwrap_or(AdapterKind::Toy);
        let out = self.out.unwrap_or_else(|| PathBuf::from("runs"));
        let policy = PaddingPolicy::default();
        let (hidden, mlp_hidden) = match adapter {
            AdapterKind::Toy => (64, 32),
            AdapterKind::Pretrained => {
                let d = ModelDims::default();
                (d.hidden, d.mlp_hidden)
            }
        };
        let defaults = TrainConfig::new(ModelConfig::new(ModelDims::default(), 1));
        let cfg = RunConfig {
            dataset,
            data_root: self.data_root.unwrap_or_else(|| PathBuf::from("data")),
            cache_dir: self.cache_dir.unwrap_or_else(|| out.join("cache")),
            adapter,
            adapter_dir: self.adapter_dir,
            toy_text_dim: self.toy_text_dim.unwrap_or(64),
            toy_image_dim: self.toy_image_dim.unwrap_or(16),
            hidden: self.hidden.unwrap_or(hidden),
            mlp_hidden: self.mlp_hidden.unwrap_or(mlp_hidden),
            max_responses: self.max_responses.unwrap_or(policy.max_responses),
            max_tokens: self.max_tokens.unwrap_or(policy.max_tokens),
            max_objects: self.max_objects.unwrap_or(policy.max_objects),
            top_k: self.top_k.unwrap_or(dataset.default_top_k()),
            folds: self.folds.unwrap_or(5),
            fold_file: self.fold_file,
            seed: self.seed.unwrap_or(0),
            epochs: self.epochs.unwrap_or(defaults.epochs),
            lr: self.lr.unwrap_or(defaults.learning_rate),
            batch_size: self.batch_size.unwrap_or(defaults.batch_size),
            validation_fraction: self.validation_fraction.unwrap_or(defaults.validation_fraction),
            ablation: self.ablation.unwrap_or(Ablation::None),
            mask_padding: self.mask_padding.unwrap_or(false),
            untie_wz: self.untie_wz.unwrap_or(false),
            deterministic: self.deterministic.unwrap_or(false),
            out,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    /// `flags > --config file > defaults`.
    pub fn from_args(args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => Settings::from_file(path)?,
            None => Settings::default(),
        };
        Settings::from_flags(args).over(file).resolve()
    }

    pub fn validate(&self) -> Result<()> {
        self.policy()?;
        self.train_config(self.toy_text_dim, self.toy_image_dim).validate()?;
        self.train_config(self.toy_text_dim, self.toy_image_dim)
            .model
            .validate()?;
        if self.folds < 2 {
            bail!(form_core::FormError::InvalidParameter(format!(
                "need at least 2 folds, got {}",
                self.folds
            )));
        }
        if self.adapter == AdapterKind::Pretrained && self.adapter_dir.is_none() {
            bail!(form_core::FormError::InvalidParameter(
                "the pretrained adapter needs --adapter-dir".into()
            ));
        }
        if let Some(dir) = &self.adapter_dir {
            if !dir.is_dir() {
                bail!(form_core::FormError::InvalidParameter(format!(
                    "adapter directory {} does not exist",
                    dir.display()
                )));
            }
        }
        if let Some(file) = &self.fold_file {
            if !file.is_file() {
                bail!(form_core::FormError::InvalidParameter(format!(
                    "fold file {} does not exist",
                    file.display()
                )));
            }
        }
        Ok(())
    }

    pub fn policy(&self) -> form_core::Result<PaddingPolicy> {
        PaddingPolicy::new(self.max_responses, self.max_tokens, self.max_objects)
    }

    /// Training configuration for an adapter with the given feature widths.
    pub fn train_config(&self, text_dim: usize, image_dim: usize) -> TrainConfig {
        let dims = ModelDims {
            text_dim,
            image_dim,
            hidden: self.hidden,
            mlp_hidden: self.mlp_hidden,
        };
        let mut model = ModelConfig::new(dims, self.top_k);
        model.ablation = self.ablation;
        model.mask_padding = self.mask_padding;
        model.untie_wz = self.untie_wz;
        TrainConfig {
            model,
            learning_rate: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            validation_fraction: self.validation_fraction,
            deterministic: self.deterministic,
        }
    }

    /// Writes the resolved configuration; `--config` accepts it back.
    pub fn write_echo(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(CONFIG_ECHO);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
