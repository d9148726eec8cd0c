//! Rate-distortion training objective.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Branch, ModelConfig};
use super::params::BoundParams;
use super::prior_vars;
use super::transforms::{analysis, hyper_analysis, hyper_synthesis, quantize, synthesis, Quantize};
use crate::color::{ciede2000_var, ms_ssim_var, RGB_TO_YUV, YUV_TO_RGB};
use crate::entropy::{factorized_bits, gaussian_bits};
use crate::error::{Error, Result};
use crate::tensor::ops::{add_all, add_scalar, concat_channels, mean, mix_channels, mul_scalar, slice_channels, square, sub, sum};
use crate::tensor::{Tape, Tensor, Var};

/// Candidate values for the MSE weight.
pub const LAMBDA1_GRID: [f64; 4] = [0.001, 0.005, 0.01, 0.02];
/// Candidate values for the MS-SSIM weight.
pub const LAMBDA2_GRID: [f64; 4] = [0.01, 0.12, 2.4, 4.8];
/// Candidate values for the CIEDE2000 weight.
pub const LAMBDA3_GRID: [f64; 4] = [0.024, 0.12, 0.24, 0.48];

/// The MSE term is measured on the 8-bit scale (unit-range MSE times 255^2).
pub const MSE_SCALE: f64 = 255.0 * 255.0;

/// Weights of the three distortion terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        let w = Self { lambda1, lambda2, lambda3 };
        w.validate()?;
        Ok(w)
    }

    /// Quality preset `q1..q4`: the `q`-th entry of each grid.
    pub fn preset(q: usize) -> Result<Self> {
        if !(1..=4).contains(&q) {
            return Err(Error::usage(format!("quality preset must be 1..4, got {q}")));
        }
        Self::new(LAMBDA1_GRID[q - 1], LAMBDA2_GRID[q - 1], LAMBDA3_GRID[q - 1])
    }

    /// Parses `q1`..`q4` or `l1,l2,l3`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(q) = s.strip_prefix('q') {
            let q = q.parse().map_err(|_| Error::usage(format!("bad quality preset {s:?}")))?;
            return Self::preset(q);
        }
        let parts: Vec<f64> = s
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::usage(format!("bad lambda triple {s:?}")))?;
        match parts[..] {
            [a, b, c] => Self::new(a, b, c),
            _ => Err(Error::usage(format!("lambda triple needs three values, got {s:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = [self.lambda1, self.lambda2, self.lambda3];
        if l.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::usage("loss weights must be finite and nonnegative"));
        }
        if l.iter().all(|&v| v == 0.0) {
            return Err(Error::usage("at least one loss weight must be positive"));
        }
        Ok(())
    }

    /// `1..=4` for the quality presets, 0 for anything else.
    pub fn id(&self) -> u16 {
        (1..=4)
            .find(|&q| Self::preset(q).map(|p| p == *self).unwrap_or(false))
            .map_or(0, |q| q as u16)
    }
}

/// Values of the objective and its terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Estimated bits per pixel.
    pub rate_bpp: f64,
    /// MSE on the 8-bit scale (see [`MSE_SCALE`]).
    pub mse: f64,
    /// `1 - MS-SSIM`.
    pub msssim_term: f64,
    /// Mean CIEDE2000.
    pub ciede: f64,
}

impl LossBreakdown {
    /// `rate + l1 mse + l2 (1 - ms_ssim) + l3 ciede`.
    pub fn recompose(&self, w: &LossWeights) -> f64 {
        self.rate_bpp + w.lambda1 * self.mse + w.lambda2 * self.msssim_term + w.lambda3 * self.ciede
    }
}

fn finite(term: &str, v: Var<'_>) -> Result<f64> {
    let x = v.item();
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::numeric(format!("loss term {term} is {x}")))
    }
}

/// Combines a reconstruction `x_hat` of `x` (both `[B, 3, H, W]` RGB) and
/// the total estimated bits into the objective.
pub fn rd_loss<'t>(
    x: &Tensor,
    x_hat: Var<'t>,
    bits: Var<'t>,
    pixels: f64,
    weights: &LossWeights,
) -> Result<(Var<'t>, LossBreakdown)> {
    weights.validate()?;
    if x.shape() != x_hat.value().shape() {
        return Err(Error::dim(format!("loss: {:?} vs {:?}", x.shape(), x_hat.value().shape())));
    }
    let tape = x_hat.tape();
    let xc = tape.constant(x.clone());
    let rate = mul_scalar(bits, 1.0 / pixels)?;
    let mse = mul_scalar(mean(square(sub(x_hat, xc)?)?)?, MSE_SCALE)?;
    let msssim_term = add_scalar(mul_scalar(ms_ssim_var(x_hat, xc)?, -1.0)?, 1.0)?;
    let ciede = ciede2000_var(x, x_hat)?;
    let total = add_all(&[
        rate,
        mul_scalar(mse, weights.lambda1)?,
        mul_scalar(msssim_term, weights.lambda2)?,
        mul_scalar(ciede, weights.lambda3)?,
    ])?;
    let breakdown = LossBreakdown {
        rate_bpp: finite("rate", rate)?,
        mse: finite("mse", mse)?,
        msssim_term: finite("ms-ssim", msssim_term)?,
        ciede: finite("ciede2000", ciede)?,
        total: finite("total", total)?,
    };
    Ok((total, breakdown))
}

/// Training forward pass on an RGB batch `[B, 3, H, W]` (H, W multiples of
/// 16): noise-relaxed quantization drawn from `seed`, rate from the latent
/// and hyperlatent likelihoods, distortion in RGB.
pub fn forward_train<'t>(
    tape: &'t Tape,
    p: &BoundParams<'t, '_>,
    config: &ModelConfig,
    x: &Tensor,
    weights: &LossWeights,
    seed: u64,
) -> Result<(Var<'t>, LossBreakdown)> {
    weights.validate()?;
    let (b, c, h, w) = x.dims4()?;
    if c != 3 {
        return Err(Error::dim(format!("training input needs 3 channels, got {c}")));
    }
    let yuv = mix_channels(tape.constant(x.clone()), RGB_TO_YUV)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bits = Vec::new();
    let mut planes = Vec::new();
    for branch in Branch::ALL {
        let input = match branch {
            Branch::Luma => slice_channels(yuv, 0, 1)?,
            Branch::Chroma => slice_channels(yuv, 1, 2)?,
        };
        let y = analysis(p, config, branch, input)?;
        let z = hyper_analysis(p, config, branch, y)?;
        let z_tilde = quantize(z, Quantize::Noise, &mut rng)?;
        let (_, _, yh, yw) = y.value().dims4()?;
        let sigma = hyper_synthesis(p, config, branch, z_tilde, (yh, yw))?;
        let y_tilde = quantize(y, Quantize::Noise, &mut rng)?;
        bits.push(sum(gaussian_bits(y_tilde, sigma)?)?);
        bits.push(sum(factorized_bits(z_tilde, &prior_vars(p, config, branch)?)?)?);
        planes.push(synthesis(p, config, branch, y_tilde)?);
    }
    let x_hat = mix_channels(concat_channels(&planes)?, YUV_TO_RGB)?;
    rd_loss(x, x_hat, add_all(&bits)?, (b * h * w) as f64, weights)
}
