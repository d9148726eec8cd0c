//! Training: synthetic data, patch sampling, the optimization loop and
//! rate-distortion evaluation.

mod config;
mod dataset;
mod evaluate;
mod trainer;

pub use config::TrainConfig;
pub use dataset::{batch_tensor, load_image_dir, sample_patches, synthetic_dataset, synthetic_image, PatchSampler, SyntheticKind};
pub use evaluate::{evaluate, evaluate_image, evaluate_images, round_trip, RdRecord, RD_HEADER};
pub use trainer::{step_batch, step_seed, train, train_step, StepRecord, TrainLog, TrainOutcome, ValidationRecord, TRAIN_LOG_HEADER};
