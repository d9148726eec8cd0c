//! Multi-scale structural similarity on RGB images.
//!
//! Per channel: 11x11 Gaussian window (sigma 1.5, "valid" filtering),
//! contrast-structure terms at every scale, the luminance term only at the
//! coarsest one, 2x2 average-pool downsampling between scales, and a
//! weighted geometric mean. Channel scores are averaged.

use super::ImageRGB;
use crate::error::{Error, Result};
use crate::tensor::ops::{add, add_scalar, avg_pool2, div, mean, mean_spatial, mul, mul_scalar, pow_scalar, relu, separable_filter_valid, square, sub};
use crate::tensor::{Tape, Var};

/// Per-scale exponents, finest scale first.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW - 1) as f64 / 2.0;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Scale weights usable for an image of the given size: the largest scale
/// count whose coarsest level still fits one window. A reduced set is
/// renormalized to sum 1; the full five-scale set is used as published.
pub fn ms_ssim_weights(height: usize, width: usize) -> Result<Vec<f64>> {
    let mut scales = 0;
    let (mut h, mut w) = (height, width);
    while scales < MS_SSIM_WEIGHTS.len() && h >= SSIM_WINDOW && w >= SSIM_WINDOW {
        scales += 1;
        h = h.div_ceil(2);
        w = w.div_ceil(2);
    }
    if scales == 0 {
        return Err(Error::usage(format!(
            "MS-SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {width}x{height}"
        )));
    }
    let w = &MS_SSIM_WEIGHTS[..scales];
    if scales == MS_SSIM_WEIGHTS.len() {
        return Ok(w.to_vec());
    }
    let total: f64 = w.iter().sum();
    Ok(w.iter().map(|v| v / total).collect())
}

/// Luminance and contrast-structure maps reduced to `[B, C, 1, 1]`.
fn ssim_terms<'t>(x: Var<'t>, y: Var<'t>, window: &[f64], with_luminance: bool) -> Result<(Var<'t>, Option<Var<'t>>)> {
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let mu_x = separable_filter_valid(x, window)?;
    let mu_y = separable_filter_valid(y, window)?;
    let mu_xy = mul(mu_x, mu_y)?;
    let mu_sq = add(square(mu_x)?, square(mu_y)?)?;
    let e_xy = separable_filter_valid(mul(x, y)?, window)?;
    let e_sq = separable_filter_valid(add(square(x)?, square(y)?)?, window)?;
    let cs_num = add_scalar(mul_scalar(sub(e_xy, mu_xy)?, 2.0)?, c2)?;
    let cs_den = add_scalar(sub(e_sq, mu_sq)?, c2)?;
    let cs_map = div(cs_num, cs_den)?;
    let cs = mean_spatial(cs_map)?;
    let ssim = if with_luminance {
        let l_map = div(add_scalar(mul_scalar(mu_xy, 2.0)?, c1)?, add_scalar(mu_sq, c1)?)?;
        Some(mean_spatial(mul(l_map, cs_map)?)?)
    } else {
        None
    };
    Ok((cs, ssim))
}

/// Differentiable MS-SSIM of two `[B, C, H, W]` batches with unit dynamic
/// range, averaged over batch and channels.
pub fn ms_ssim_var<'t>(x: Var<'t>, y: Var<'t>) -> Result<Var<'t>> {
    let xs = x.value().dims4()?;
    if y.value().dims4()? != xs {
        return Err(Error::dim("ms_ssim: shapes differ"));
    }
    let weights = ms_ssim_weights(xs.2, xs.3)?;
    let window = gaussian_window();
    let (mut x, mut y) = (x, y);
    let mut product: Option<Var<'t>> = None;
    for (k, &wk) in weights.iter().enumerate() {
        if k > 0 {
            x = avg_pool2(x)?;
            y = avg_pool2(y)?;
        }
        let last = k + 1 == weights.len();
        let (cs, ssim) = ssim_terms(x, y, &window, last)?;
        let term = if last { ssim.expect("luminance requested") } else { cs };
        let factor = pow_scalar(relu(term)?, wk)?;
        product = Some(match product {
            None => factor,
            Some(p) => mul(p, factor)?,
        });
    }
    mean(product.expect("at least one scale"))
}

/// MS-SSIM between two RGB images; 1 for identical inputs.
pub fn ms_ssim(x: &ImageRGB, y: &ImageRGB) -> Result<f64> {
    if (x.width(), x.height()) != (y.width(), y.height()) {
        return Err(Error::dim("ms_ssim: image sizes differ"));
    }
    ms_ssim_weights(x.height(), x.width())?;
    if x == y {
        return Ok(1.0);
    }
    let tape = Tape::new();
    let v = ms_ssim_var(tape.constant(x.to_tensor()), tape.constant(y.to_tensor()))?;
    Ok(v.item())
}

/// `-10 log10(1 - ms_ssim)`.
pub fn ms_ssim_db(ms_ssim: f64) -> f64 {
    -10.0 * (1.0 - ms_ssim).log10()
}
