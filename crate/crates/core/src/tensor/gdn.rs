//! Generalized divisive normalization.
//!
//! Per pixel, `z_i = x_i / sqrt(beta_i + sum_j gamma_ij * x_j^2)`; the inverse
//! form multiplies by the square root instead.

use super::{Tensor, Var};
use crate::error::{Error, Result};
use crate::par::*;

/// GDN (or IGDN when `inverse`) over `[B, C, H, W]` with `beta [C]` and
/// `gamma [C, C]`. Both must already be positive; parameterization lives in
/// the model.
pub fn gdn<'t>(input: Var<'t>, beta: Var<'t>, gamma: Var<'t>, inverse: bool) -> Result<Var<'t>> {
    let (xv, bv, gv) = (input.value(), beta.value(), gamma.value());
    let (b, c, h, w) = xv.dims4()?;
    if bv.len() != c || gv.shape() != [c, c] {
        return Err(Error::dim(format!(
            "gdn: beta {:?} / gamma {:?} for {c} channels",
            bv.shape(),
            gv.shape()
        )));
    }
    let plane = h * w;
    let img = c * plane;
    // norm[b, i, p] = beta_i + sum_j gamma_ij x[b, j, p]^2
    let mut norm = vec![0.0; b * img];
    let (xd, bd, gmat) = (xv.data(), bv.data(), gv.data());
    norm.par_chunks_mut(img).enumerate().for_each(|(bi, np)| {
        let xs = &xd[bi * img..][..img];
        for i in 0..c {
            let dst = &mut np[i * plane..][..plane];
            dst.fill(bd[i]);
            for j in 0..c {
                let gij = gmat[i * c + j];
                if gij == 0.0 {
                    continue;
                }
                let src = &xs[j * plane..][..plane];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += gij * s * s;
                }
            }
        }
    });
    if let Some(bad) = norm.iter().find(|&&n| n.is_nan() || n <= 0.0) {
        return Err(Error::numeric(format!("gdn: non-positive divisor {bad}")));
    }
    // factor = norm^(-1/2) (forward) or norm^(1/2) (inverse)
    let factor: Vec<f64> = norm
        .iter()
        .map(|&n| if inverse { n.sqrt() } else { 1.0 / n.sqrt() })
        .collect();
    let out: Vec<f64> = xv.data().iter().zip(&factor).map(|(x, f)| x * f).collect();
    let out = Tensor::new(&[b, c, h, w], out)?;
    input.tape().push(
        if inverse { "igdn" } else { "gdn" },
        out,
        &[input, beta, gamma],
        Box::new(move |g| {
            let x = xv.data();
            let gd = g.data();
            // d out_i / d norm_i = x_i * p * norm_i^(p-1), p = -1/2 or 1/2.
            let dnorm: Vec<f64> = (0..x.len())
                .map(|k| {
                    let n = norm[k];
                    let d = if inverse {
                        0.5 * factor[k] / n
                    } else {
                        -0.5 * factor[k] / n
                    };
                    gd[k] * x[k] * d
                })
                .collect();
            let mut gx: Vec<f64> = gd.iter().zip(&factor).map(|(g, f)| g * f).collect();
            let gmat = gv.data();
            let dnorm_ref = &dnorm;
            gx.par_chunks_mut(img).enumerate().for_each(|(bi, gxp)| {
                let xs = &x[bi * img..][..img];
                let dn = &dnorm_ref[bi * img..][..img];
                for j in 0..c {
                    let xj = &xs[j * plane..][..plane];
                    let dst = &mut gxp[j * plane..][..plane];
                    for i in 0..c {
                        let gij = gmat[i * c + j];
                        if gij == 0.0 {
                            continue;
                        }
                        let dni = &dn[i * plane..][..plane];
                        for p in 0..plane {
                            dst[p] += 2.0 * gij * dni[p] * xj[p];
                        }
                    }
                }
            });
            let mut gbeta = vec![0.0; c];
            let mut ggamma = vec![0.0; c * c];
            for bi in 0..b {
                let xs = &x[bi * img..][..img];
                let dn = &dnorm[bi * img..][..img];
                for i in 0..c {
                    let dni = &dn[i * plane..][..plane];
                    gbeta[i] += dni.iter().sum::<f64>();
                    for j in 0..c {
                        let xj = &xs[j * plane..][..plane];
                        ggamma[i * c + j] += dni.iter().zip(xj).map(|(d, v)| d * v * v).sum::<f64>();
                    }
                }
            }
            vec![
                Tensor::new(&[b, c, h, w], gx).ok(),
                Tensor::new(bv.shape(), gbeta).ok(),
                Tensor::new(&[c, c], ggamma).ok(),
            ]
        }),
    )
}
