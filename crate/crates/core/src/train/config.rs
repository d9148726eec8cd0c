//! Training configuration and its `key = value` text form.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{LossWeights, ModelConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub patch_size: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Total number of optimizer steps; a resumed run continues up to it.
    pub steps: u64,
    pub weights: LossWeights,
    pub seed: u64,
    /// Directory of training images; the synthetic set is used when absent.
    pub train_dir: Option<PathBuf>,
    /// Directory of held-out images; a synthetic set when absent.
    pub val_dir: Option<PathBuf>,
    pub synthetic_count: usize,
    pub synthetic_size: usize,
    pub val_count: usize,
    /// Where checkpoints are written.
    pub checkpoint: Option<PathBuf>,
    /// Steps between checkpoints (0: only at the end).
    pub checkpoint_every: u64,
    /// Steps between validations (0: never).
    pub validate_every: u64,
    pub log_csv: Option<PathBuf>,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    /// Batches prepared ahead of the optimizer.
    pub prefetch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::tiny(),
            patch_size: 256,
            batch_size: 8,
            lr: 1e-4,
            steps: 1000,
            weights: LossWeights::preset(2).expect("preset"),
            seed: 0,
            train_dir: None,
            val_dir: None,
            synthetic_count: 64,
            synthetic_size: 256,
            val_count: 4,
            checkpoint: None,
            checkpoint_every: 0,
            validate_every: 0,
            log_csv: None,
            clip_norm: 1.0,
            prefetch: 2,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::usage(format!("invalid value {value:?} for {key}")))
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl TrainConfig {
    /// Sets one field by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "preset" => self.model = ModelConfig::preset(value)?,
            "patch_size" => self.patch_size = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "lambda" | "weights" => self.weights = LossWeights::parse(value)?,
            "seed" => self.seed = parse(key, value)?,
            "train_dir" => self.train_dir = opt_path(value),
            "val_dir" => self.val_dir = opt_path(value),
            "synthetic_count" => self.synthetic_count = parse(key, value)?,
            "synthetic_size" => self.synthetic_size = parse(key, value)?,
            "val_count" => self.val_count = parse(key, value)?,
            "checkpoint" => self.checkpoint = opt_path(value),
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "validate_every" => self.validate_every = parse(key, value)?,
            "log_csv" => self.log_csv = opt_path(value),
            "clip_norm" => self.clip_norm = parse(key, value)?,
            "prefetch" => self.prefetch = parse(key, value)?,
            other => return Err(Error::format(format!("unknown training option {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults; `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k, v).map_err(|e| match e {
                Error::Usage(m) | Error::Format(m) => Error::format(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        let f = self.model.downsample_factor();
        if self.patch_size == 0 || !self.patch_size.is_multiple_of(f) {
            return Err(Error::usage(format!("patch_size must be a positive multiple of {f}")));
        }
        if self.batch_size == 0 {
            return Err(Error::usage("batch_size must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::usage("lr must be positive"));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::usage("clip_norm must be positive"));
        }
        if self.train_dir.is_none() && (self.synthetic_count == 0 || self.synthetic_size < self.patch_size) {
            return Err(Error::usage("synthetic images must be at least one patch in size"));
        }
        Ok(())
    }
}
