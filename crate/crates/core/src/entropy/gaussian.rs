//! Zero-mean Gaussian conditional model for the latents.

use std::f64::consts::{LN_2, SQRT_2};

use crate::error::{Error, Result};
use crate::par::*;
use crate::tensor::{Tensor, Var};

use super::cdf::CdfTable;

/// Smallest scale the model predicts or codes with.
pub const SIGMA_FLOOR: f64 = 0.11;
/// Largest entry of the scale table.
pub const SIGMA_CEIL: f64 = 64.0;
/// Number of entries in the scale table.
pub const SCALE_TABLE_LEN: usize = 64;
/// Probability mass left outside each coded alphabet; also the likelihood floor.
pub const TAIL_MASS: f64 = 1e-9;

pub(crate) fn std_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

fn std_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Quantile of the standard normal, by bisection on the CDF.
pub(crate) fn std_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if std_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Probability of the unit-width bin centred on `v`, without the floor.
fn bin_mass(v: f64, sigma: f64) -> f64 {
    // Evaluated on the lower tail, where erfc keeps full relative precision.
    let a = v.abs();
    std_cdf((0.5 - a) / sigma) - std_cdf((-0.5 - a) / sigma)
}

/// `Phi((v + 1/2) / sigma) - Phi((v - 1/2) / sigma)`, with sigma clamped to
/// [`SIGMA_FLOOR`] and the result floored at [`TAIL_MASS`].
pub fn gaussian_likelihood(v: f64, sigma: f64) -> f64 {
    bin_mass(v, sigma.max(SIGMA_FLOOR)).max(TAIL_MASS)
}

/// 64 log-spaced scales from [`SIGMA_FLOOR`] to [`SIGMA_CEIL`].
pub fn default_scale_table() -> Vec<f64> {
    let (lo, hi) = (SIGMA_FLOOR.ln(), SIGMA_CEIL.ln());
    (0..SCALE_TABLE_LEN)
        .map(|i| (lo + (hi - lo) * i as f64 / (SCALE_TABLE_LEN - 1) as f64).exp())
        .collect()
}

/// Index of the first table scale at or above `sigma` (the last one if none).
pub fn scale_index(table: &[f64], sigma: f64) -> usize {
    table.partition_point(|&s| s < sigma).min(table.len() - 1)
}

/// Integer CDF table for one scale: symbols `-M..=M` plus an escape, where
/// `M = ceil(scale * z)` and `z` leaves [`TAIL_MASS`] in the two tails.
pub fn gaussian_cdf_table(scale: f64) -> CdfTable {
    let z = -std_quantile(TAIL_MASS / 2.0);
    let m = (scale * z).ceil() as i32;
    let probs: Vec<f64> = (-m..=m).map(|v| bin_mass(v as f64, scale)).collect();
    CdfTable::from_probabilities(-m, &probs)
}

/// Builds one table per scale.
pub fn gaussian_cdf_tables(scale_table: &[f64]) -> Result<Vec<CdfTable>> {
    if scale_table.is_empty() || scale_table.windows(2).any(|w| w[0] >= w[1]) || scale_table[0] <= 0.0 {
        return Err(Error::format("scale table must be positive and strictly increasing"));
    }
    Ok(scale_table.iter().map(|&s| gaussian_cdf_table(s)).collect())
}

/// Element-wise information content `-log2 p(y | sigma)` in bits.
///
/// Differentiable in both arguments; the gradient vanishes where the
/// likelihood floor or the sigma clamp is active.
pub fn gaussian_bits<'t>(y: Var<'t>, sigma: Var<'t>) -> Result<Var<'t>> {
    let (yv, sv) = (y.value(), sigma.value());
    if yv.shape() != sv.shape() {
        return Err(Error::dim(format!(
            "gaussian_bits: latent {:?} vs scale {:?}",
            yv.shape(),
            sv.shape()
        )));
    }
    let (yd, sd) = (yv.data(), sv.data());
    // Per element: bits, d bits / d y, d bits / d sigma.
    let terms: Vec<[f64; 3]> = yd
        .par_iter()
        .zip(sd.par_iter())
        .map(|(&v, &s)| {
            let clamped = s < SIGMA_FLOOR;
            let s = s.max(SIGMA_FLOOR);
            let a = v.abs();
            let (u, l) = ((0.5 - a) / s, (-0.5 - a) / s);
            let lik = std_cdf(u) - std_cdf(l);
            if lik <= TAIL_MASS {
                return [-TAIL_MASS.log2(), 0.0, 0.0];
            }
            let dbits = -1.0 / (lik * LN_2);
            let (pu, pl) = (std_pdf(u), std_pdf(l));
            let d_abs = (pl - pu) / s;
            let d_sigma = if clamped { 0.0 } else { (l * pl - u * pu) / s };
            // The bin mass is even in v, so its derivative vanishes at v = 0.
            let sign = if v == 0.0 { 0.0 } else { v.signum() };
            [-lik.log2(), dbits * sign * d_abs, dbits * d_sigma]
        })
        .collect();
    let shape = yv.shape().to_vec();
    let value = Tensor::new(&shape, terms.iter().map(|t| t[0]).collect())?;
    y.tape().push(
        "gaussian_bits",
        value,
        &[y, sigma],
        Box::new(move |g| {
            let gy = terms.iter().zip(g.data()).map(|(t, gk)| t[1] * gk).collect();
            let gs = terms.iter().zip(g.data()).map(|(t, gk)| t[2] * gk).collect();
            vec![Tensor::new(&shape, gy).ok(), Tensor::new(&shape, gs).ok()]
        }),
    )
}
