//! Analysis, synthesis and hyper transforms of one branch.

use rand::Rng;

use super::config::{Branch, ModelConfig, HYPER_STRIDES, MAIN_STAGES};
use super::params::BoundParams;
use crate::entropy::SIGMA_FLOOR;
use crate::error::{Error, Result};
use crate::tensor::ops::{abs, add_const, add_scalar, crop, exp, lower_bound, relu, softplus};
use crate::tensor::{cbam, conv2d, gdn, transposed_conv2d, CbamVars, Padding, Tensor, Var};

/// Lower bound added to the softplus-mapped GDN offsets.
pub const BETA_MIN: f64 = 1e-6;

fn conv<'t>(p: &BoundParams<'t, '_>, prefix: &str, x: Var<'t>, stride: usize) -> Result<Var<'t>> {
    let k = p.get(&format!("{prefix}.kernel"))?;
    let b = p.get(&format!("{prefix}.bias"))?;
    conv2d(x, k, Some(b), stride, Padding::Same)
}

fn deconv<'t>(p: &BoundParams<'t, '_>, prefix: &str, x: Var<'t>, stride: usize) -> Result<Var<'t>> {
    let k = p.get(&format!("{prefix}.kernel"))?;
    let b = p.get(&format!("{prefix}.bias"))?;
    transposed_conv2d(x, k, Some(b), stride)
}

fn normalize<'t>(p: &BoundParams<'t, '_>, prefix: &str, x: Var<'t>, inverse: bool) -> Result<Var<'t>> {
    let beta = add_scalar(softplus(p.get(&format!("{prefix}.beta"))?)?, BETA_MIN)?;
    let gamma = softplus(p.get(&format!("{prefix}.gamma"))?)?;
    gdn(x, beta, gamma, inverse)
}

fn attention<'t>(p: &BoundParams<'t, '_>, prefix: &str, x: Var<'t>) -> Result<Var<'t>> {
    let g = |s: &str| p.get(&format!("{prefix}.{s}"));
    let vars = CbamVars {
        fc1_w: g("fc1.kernel")?,
        fc1_b: g("fc1.bias")?,
        fc2_w: g("fc2.kernel")?,
        fc2_b: g("fc2.bias")?,
        spatial_w: g("spatial.kernel")?,
        spatial_b: g("spatial.bias")?,
    };
    cbam(x, &vars)
}

fn expect_channels(x: Var<'_>, channels: usize, what: &str) -> Result<(usize, usize, usize)> {
    let (b, c, h, w) = x.value().dims4()?;
    if c != channels {
        return Err(Error::usage(format!("{what} expects {channels} channels, got {c}")));
    }
    Ok((b, h, w))
}

/// `[B, planes, H, W]` → `[B, N, H/16, W/16]`: four strided conv + GDN
/// stages followed by attention.
pub fn analysis<'t>(p: &BoundParams<'t, '_>, config: &ModelConfig, branch: Branch, x: Var<'t>) -> Result<Var<'t>> {
    let (_, h, w) = expect_channels(x, branch.planes(), "analysis")?;
    let f = config.downsample_factor();
    if h % f != 0 || w % f != 0 {
        return Err(Error::usage(format!("analysis input {h}x{w} is not a multiple of {f}")));
    }
    let b = branch.name();
    let mut y = x;
    for i in 0..MAIN_STAGES {
        y = conv(p, &format!("{b}.analysis.conv{i}"), y, 2)?;
        y = normalize(p, &format!("{b}.analysis.gdn{i}"), y, false)?;
    }
    attention(p, &format!("{b}.analysis.cbam"), y)
}

/// `[B, N, h, w]` → `[B, planes, 16h, 16w]`: four transposed conv + IGDN
/// stages with attention after the first.
pub fn synthesis<'t>(p: &BoundParams<'t, '_>, config: &ModelConfig, branch: Branch, y: Var<'t>) -> Result<Var<'t>> {
    expect_channels(y, config.channels(branch), "synthesis")?;
    let b = branch.name();
    let mut x = y;
    for i in 0..MAIN_STAGES {
        x = deconv(p, &format!("{b}.synthesis.deconv{i}"), x, 2)?;
        x = normalize(p, &format!("{b}.synthesis.igdn{i}"), x, true)?;
        if i == 0 {
            x = attention(p, &format!("{b}.synthesis.cbam"), x)?;
        }
    }
    Ok(x)
}

/// Hyperlatent from latent magnitudes: conv (stride 1), ReLU, conv (stride 2),
/// ReLU, conv (stride 2).
pub fn hyper_analysis<'t>(p: &BoundParams<'t, '_>, config: &ModelConfig, branch: Branch, y: Var<'t>) -> Result<Var<'t>> {
    expect_channels(y, config.channels(branch), "hyper analysis")?;
    let b = branch.name();
    let mut z = abs(y)?;
    for (i, &s) in HYPER_STRIDES.iter().enumerate() {
        if i > 0 {
            z = relu(z)?;
        }
        z = conv(p, &format!("{b}.hyper_analysis.conv{i}"), z, s)?;
    }
    Ok(z)
}

/// Latent scales from a hyperlatent, cropped to the latent size `(h, w)`:
/// the mirrored transposed convs, then `exp` and the [`SIGMA_FLOOR`].
pub fn hyper_synthesis<'t>(
    p: &BoundParams<'t, '_>,
    config: &ModelConfig,
    branch: Branch,
    z: Var<'t>,
    latent_size: (usize, usize),
) -> Result<Var<'t>> {
    let (_, zh, zw) = expect_channels(z, config.hyper_channels(branch), "hyper synthesis")?;
    if config.hyper_size(latent_size.0, latent_size.1) != (zh, zw) {
        return Err(Error::dim(format!(
            "hyperlatent {zh}x{zw} does not match latent {}x{}",
            latent_size.0, latent_size.1
        )));
    }
    let b = branch.name();
    let mut s = z;
    for (i, &stride) in HYPER_STRIDES.iter().rev().enumerate() {
        if i > 0 {
            s = relu(s)?;
        }
        s = deconv(p, &format!("{b}.hyper_synthesis.deconv{i}"), s, stride)?;
    }
    let s = crop(s, latent_size.0, latent_size.1)?;
    lower_bound(exp(s)?, SIGMA_FLOOR)
}

/// Quantization mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantize {
    /// Additive uniform noise in `[-0.5, 0.5)`; training relaxation.
    Noise,
    /// Nearest integer, ties away from zero; inference.
    Round,
}

/// Applies `mode`. Rounding passes gradients straight through.
pub fn quantize<'t>(x: Var<'t>, mode: Quantize, rng: &mut impl Rng) -> Result<Var<'t>> {
    let v = x.value();
    match mode {
        Quantize::Noise => add_const(x, &Tensor::from_fn(v.shape(), |_| rng.random::<f64>() - 0.5)),
        Quantize::Round => round(x),
    }
}

/// Nearest integer, ties away from zero, with a pass-through gradient.
/// Negative zero is normalised to zero so decoded symbols match bit for bit.
pub fn round(x: Var<'_>) -> Result<Var<'_>> {
    x.tape().push("round", x.value().map(|v| v.round() + 0.0), &[x], Box::new(|g| vec![Some(g.clone())]))
}
