//! Optimization loop: prefetched patch batches, forward/backward of the
//! rate-distortion objective, clipped Adam steps and checkpoints.

use std::sync::mpsc::sync_channel;
use std::time::Instant;

use super::config::TrainConfig;
use super::dataset::{batch_tensor, PatchSampler};
use super::evaluate::evaluate_images;
use crate::color::{ImageRGB, MetricReport};
use crate::error::{Error, Result};
use crate::model::{forward_train, save_checkpoint, Checkpoint, LossBreakdown, LossWeights, Model};
use crate::tensor::{adam_step, AdamState, Tape, Tensor};

/// Loss terms of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// 1-based index of the step.
    pub step: u64,
    pub loss: LossBreakdown,
}

/// Validation metrics after a step.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationRecord {
    pub step: u64,
    pub reports: Vec<MetricReport>,
    pub mean_bpp: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub validation: Vec<ValidationRecord>,
    /// Wall-clock seconds spent in the loop.
    pub seconds: f64,
}

pub const TRAIN_LOG_HEADER: &str = "step,total,rate_bpp,mse,msssim_term,ciede";

impl TrainLog {
    /// One row per step under [`TRAIN_LOG_HEADER`].
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRAIN_LOG_HEADER);
        s.push('\n');
        for r in &self.steps {
            let l = &r.loss;
            s.push_str(&format!("{},{},{},{},{},{}\n", r.step, l.total, l.rate_bpp, l.mse, l.msssim_term, l.ciede));
        }
        s
    }

    /// Mean total loss over `steps[range]`.
    pub fn mean_total(&self, range: std::ops::Range<usize>) -> f64 {
        let r = &self.steps[range];
        r.iter().map(|s| s.loss.total).sum::<f64>() / r.len() as f64
    }
}

/// Per-step seed for one purpose (0: patches, 1: quantization noise).
pub fn step_seed(seed: u64, step: u64, stream: u64) -> u64 {
    // SplitMix64 finalizer over the combined inputs.
    let mut z = seed
        .wrapping_add(step.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Patches of a given step, a pure function of `(seed, step)`.
pub fn step_batch(sampler: &PatchSampler<'_>, batch: usize, seed: u64, step: u64) -> Result<Tensor> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(step_seed(seed, step, 0));
    batch_tensor(&sampler.sample(batch, &mut rng))
}

fn round_f32(t: &mut Tensor) {
    t.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
}

/// One optimizer step on `batch`; returns the loss before the update.
/// Every failure happens before the update, leaving `model` and `adam`
/// untouched.
pub fn train_step(
    model: &mut Model,
    adam: &mut AdamState,
    batch: &Tensor,
    weights: &LossWeights,
    noise_seed: u64,
    clip_norm: f64,
) -> Result<LossBreakdown> {
    let (grads, breakdown) = {
        let tape = Tape::new();
        let p = model.bind(&tape, true);
        let (total, breakdown) = forward_train(&tape, &p, &model.config, batch, weights, noise_seed)?;
        let mut g = tape.backward(total)?;
        let grads: Vec<Tensor> = p
            .vars()
            .iter()
            .zip(model.params.values())
            .map(|(&v, t)| g.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect();
        (grads, breakdown)
    };
    let norm = grads.iter().map(|g| g.dot(g)).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::numeric(format!("gradient norm is {norm}")));
    }
    let scale = if norm > clip_norm { clip_norm / norm } else { 1.0 };
    let grads: Vec<Tensor> = grads.into_iter().map(|g| if scale < 1.0 { g.map(|v| v * scale) } else { g }).collect();
    let mut params: Vec<&mut Tensor> = model.params.values_mut().iter_mut().collect();
    let refs: Vec<Option<&Tensor>> = grads.iter().map(Some).collect();
    adam_step(&mut params, &refs, adam)?;
    model.params.round_to_f32();
    adam.m.iter_mut().chain(adam.v.iter_mut()).for_each(round_f32);
    Ok(breakdown)
}

/// Outcome of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub adam: AdamState,
    pub log: TrainLog,
}

fn save(config: &TrainConfig, model: &Model, adam: &AdamState) -> Result<()> {
    if let Some(path) = &config.checkpoint {
        save_checkpoint(path, model, Some(adam))?;
    }
    Ok(())
}

/// Trains from `init` (or a fresh model seeded by `config.seed`) until
/// `config.steps` optimizer steps have been taken in total.
///
/// A numeric failure stops the run; the parameters from before the failing
/// step are written to the checkpoint path and the error is returned.
pub fn train(config: &TrainConfig, init: Option<Checkpoint>, train_images: &[ImageRGB], val_images: &[ImageRGB]) -> Result<TrainOutcome> {
    config.validate()?;
    let (mut model, mut adam) = match init {
        Some(ck) => {
            if ck.model.config != config.model {
                return Err(Error::usage(format!(
                    "checkpoint architecture ({}) differs from the configured one ({})",
                    ck.model.config, config.model
                )));
            }
            let adam = match ck.adam {
                Some(mut a) => {
                    a.lr = config.lr;
                    a
                }
                None => AdamState::new(ck.model.params.values(), config.lr),
            };
            (ck.model, adam)
        }
        None => {
            let m = Model::new(config.model.clone(), config.weights, config.seed)?;
            let a = AdamState::new(m.params.values(), config.lr);
            (m, a)
        }
    };
    model.weights = config.weights;
    let sampler = PatchSampler::new(train_images, config.patch_size)?;
    let start = adam.step;
    let mut log = TrainLog::default();
    let clock = Instant::now();

    let outcome = std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = sync_channel::<Result<Tensor>>(config.prefetch.max(1));
        let sampler_ref = &sampler;
        scope.spawn(move || {
            for step in start + 1..=config.steps {
                if tx.send(step_batch(sampler_ref, config.batch_size, config.seed, step)).is_err() {
                    break;
                }
            }
        });
        for step in start + 1..=config.steps {
            let batch = rx.recv().map_err(|_| Error::usage("batch producer stopped"))??;
            let loss = match train_step(&mut model, &mut adam, &batch, &config.weights, step_seed(config.seed, step, 1), config.clip_norm) {
                Ok(l) => l,
                Err(e) => {
                    save(config, &model, &adam)?;
                    return Err(e);
                }
            };
            log.steps.push(StepRecord { step, loss });
            if step % 50 == 0 || step == config.steps {
                log::info!(
                    "step {step}: loss {:.4} (rate {:.4} bpp, mse {:.3}, 1-msssim {:.4}, ciede {:.3})",
                    loss.total,
                    loss.rate_bpp,
                    loss.mse,
                    loss.msssim_term,
                    loss.ciede
                );
            }
            if config.validate_every > 0 && step % config.validate_every == 0 && !val_images.is_empty() {
                log.validation.push(validate(&model, val_images, step)?);
            }
            if config.checkpoint_every > 0 && step % config.checkpoint_every == 0 {
                save(config, &model, &adam)?;
            }
        }
        Ok(())
    });
    log.seconds = clock.elapsed().as_secs_f64();
    outcome?;
    save(config, &model, &adam)?;
    if let Some(path) = &config.log_csv {
        crate::write_atomic(path, log.to_csv().as_bytes())?;
    }
    Ok(TrainOutcome { model, adam, log })
}

fn validate(model: &Model, images: &[ImageRGB], step: u64) -> Result<ValidationRecord> {
    let records = evaluate_images(model, images)?;
    let mean_bpp = records.iter().map(|(r, _)| r.bpp).sum::<f64>() / records.len() as f64;
    let reports = records.into_iter().map(|(_, m)| m).collect();
    Ok(ValidationRecord { step, reports, mean_bpp })
}
