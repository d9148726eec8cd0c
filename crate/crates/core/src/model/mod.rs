//! Dual-branch (luminance / chrominance) hyperprior codec.

mod checkpoint;
mod config;
mod latents;
mod loss;
mod params;
mod transforms;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use config::{Branch, ModelConfig, HYPER_STRIDES, MAIN_STAGES};
pub use latents::{decode_latents, encode_latents, pad_to_multiple, padded_size, scales_from_hyperlatent, LatentBundle};
pub use loss::{forward_train, rd_loss, LossBreakdown, LossWeights, LAMBDA1_GRID, LAMBDA2_GRID, LAMBDA3_GRID, MSE_SCALE};
pub use params::{init_params, prior_names, BoundParams, ParamStore, CBAM_KERNEL, CBAM_REDUCTION};
pub use transforms::{analysis, hyper_analysis, hyper_synthesis, quantize, round, synthesis, Quantize, BETA_MIN};

use crate::entropy::{default_scale_table, FactorizedPrior, PriorVars};
use crate::error::Result;
use crate::tensor::Tape;

/// Architecture, parameters, coding scale table and the loss weights the
/// parameters were (or are being) trained for.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub scale_table: Vec<f64>,
    pub weights: LossWeights,
}

impl Model {
    /// Randomly initialized model.
    pub fn new(config: ModelConfig, weights: LossWeights, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            params: init_params(&config, seed)?,
            config,
            scale_table: default_scale_table(),
            weights,
        })
    }

    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> BoundParams<'t, '_> {
        self.params.bind(tape, trainable)
    }

    /// The hyperlatent prior of a branch, evaluated from the current parameters.
    pub fn prior(&self, branch: Branch) -> Result<FactorizedPrior> {
        let tensors = prior_names(&self.config, branch)
            .iter()
            .map(|n| self.params.get(n))
            .collect::<Result<Vec<_>>>()?;
        FactorizedPrior::new(&tensors)
    }
}

/// Handles of a branch's prior tensors on a tape.
pub fn prior_vars<'t>(p: &BoundParams<'t, '_>, config: &ModelConfig, branch: Branch) -> Result<PriorVars<'t>> {
    let params = prior_names(config, branch).iter().map(|n| p.get(n)).collect::<Result<Vec<_>>>()?;
    Ok(PriorVars { params })
}
