//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod reference;

use chromacodec::color::ImageRGB;
use chromacodec::model::{LossWeights, Model, ModelConfig};
use chromacodec::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_| r.random_range(lo..hi))
}

/// Standard normal sample by Box-Muller.
pub fn normal(r: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - r.random::<f64>();
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Smooth random image: a few random colour ramps plus mild pixel noise.
pub fn random_image(width: usize, height: usize, seed: u64) -> ImageRGB {
    let mut r = rng(seed);
    let coef: Vec<[f64; 3]> = (0..3).map(|_| [r.random(), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
    let noise: Vec<f64> = (0..width * height * 3).map(|_| r.random_range(-0.05..0.05)).collect();
    ImageRGB::from_fn(width, height, |x, y| {
        let (u, v) = (x as f64 / width as f64, y as f64 / height as f64);
        let k = (y * width + x) * 3;
        std::array::from_fn(|c| (coef[c][0] * 0.5 + 0.25 + 0.3 * (coef[c][1] * u + coef[c][2] * v) + noise[k + c]).clamp(0.0, 1.0))
    })
}

pub fn tiny_model(seed: u64) -> Model {
    Model::new(ModelConfig::tiny(), LossWeights::preset(2).unwrap(), seed).unwrap()
}
