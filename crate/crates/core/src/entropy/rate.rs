//! Rate estimates from the likelihood models and the coder's integer tables.

use super::cdf::CdfTable;
use super::gaussian::{gaussian_cdf_tables, gaussian_likelihood};
use crate::error::{Error, Result};
use crate::model::{Branch, LatentBundle, Model};

/// Estimated information content of a [`LatentBundle`], in bits.
#[derive(Clone, Debug, PartialEq)]
pub struct RateEstimate {
    pub total_bits: f64,
    /// Per latent channel.
    pub y_lum: Vec<f64>,
    pub y_chroma: Vec<f64>,
    /// Per hyperlatent channel.
    pub z_lum: Vec<f64>,
    pub z_chroma: Vec<f64>,
}

impl RateEstimate {
    pub fn y_channels(&self, branch: Branch) -> &[f64] {
        match branch {
            Branch::Luma => &self.y_lum,
            Branch::Chroma => &self.y_chroma,
        }
    }

    pub fn z_channels(&self, branch: Branch) -> &[f64] {
        match branch {
            Branch::Luma => &self.z_lum,
            Branch::Chroma => &self.z_chroma,
        }
    }

    pub fn bpp(&self, pixels: usize) -> f64 {
        self.total_bits / pixels as f64
    }
}

/// `sum -log2 p` over every latent (Gaussian with the bundle's scales) and
/// hyperlatent (factorized prior) element, with per-channel sums.
pub fn estimate_rate_bits(bundle: &LatentBundle, model: &Model) -> Result<RateEstimate> {
    let mut per = Vec::new();
    for branch in Branch::ALL {
        let (y, sigma) = (bundle.y(branch), bundle.sigma(branch));
        if y.shape() != sigma.shape() {
            return Err(Error::dim(format!("{branch} latent and scale shapes differ")));
        }
        let (b, c, h, w) = y.dims4()?;
        let plane = h * w;
        let mut y_bits = vec![0.0; c];
        for bi in 0..b {
            for (ch, bits) in y_bits.iter_mut().enumerate() {
                let off = (bi * c + ch) * plane;
                *bits += y.data()[off..off + plane]
                    .iter()
                    .zip(&sigma.data()[off..off + plane])
                    .map(|(&v, &s)| -gaussian_likelihood(v, s).log2())
                    .sum::<f64>();
            }
        }
        let prior = model.prior(branch)?;
        let z = bundle.z(branch);
        let (zb, zc, zh, zw) = z.dims4()?;
        if zc != prior.channels() {
            return Err(Error::dim(format!("{branch} hyperlatent has {zc} channels, prior {}", prior.channels())));
        }
        let zplane = zh * zw;
        let mut z_bits = vec![0.0; zc];
        for bi in 0..zb {
            for (ch, bits) in z_bits.iter_mut().enumerate() {
                let off = (bi * zc + ch) * zplane;
                *bits += z.data()[off..off + zplane].iter().map(|&v| -prior.likelihood(ch, v).log2()).sum::<f64>();
            }
        }
        per.push((y_bits, z_bits));
    }
    let (chroma, lum) = (per.pop().unwrap(), per.pop().unwrap());
    let total_bits = [&lum.0, &lum.1, &chroma.0, &chroma.1].iter().flat_map(|v| v.iter()).sum();
    Ok(RateEstimate {
        total_bits,
        y_lum: lum.0,
        y_chroma: chroma.0,
        z_lum: lum.1,
        z_chroma: chroma.1,
    })
}

/// Integer CDF tables used by the range coder: one per scale-table entry and
/// one per hyperlatent channel of each branch.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyTables {
    pub gaussian: Vec<CdfTable>,
    pub prior_lum: Vec<CdfTable>,
    pub prior_chroma: Vec<CdfTable>,
}

impl EntropyTables {
    pub fn new(model: &Model) -> Result<Self> {
        Ok(Self {
            gaussian: gaussian_cdf_tables(&model.scale_table)?,
            prior_lum: model.prior(Branch::Luma)?.cdf_tables(),
            prior_chroma: model.prior(Branch::Chroma)?.cdf_tables(),
        })
    }

    pub fn prior(&self, branch: Branch) -> &[CdfTable] {
        match branch {
            Branch::Luma => &self.prior_lum,
            Branch::Chroma => &self.prior_chroma,
        }
    }
}
