//! Inference-time encoding to and decoding from quantized latents.

use super::config::{Branch, ModelConfig};
use super::transforms::{analysis, hyper_analysis, hyper_synthesis, round, synthesis};
use super::Model;
use crate::color::{rgb_to_yuv, yuv_to_rgb, ImageRGB, ImageYUV};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor};

/// Quantized latents, quantized hyperlatents and the latent scales predicted
/// from the latter, for one image (batch size 1).
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBundle {
    pub y_lum: Tensor,
    pub y_chroma: Tensor,
    pub z_lum: Tensor,
    pub z_chroma: Tensor,
    pub sigma_lum: Tensor,
    pub sigma_chroma: Tensor,
}

impl LatentBundle {
    pub fn y(&self, branch: Branch) -> &Tensor {
        match branch {
            Branch::Luma => &self.y_lum,
            Branch::Chroma => &self.y_chroma,
        }
    }

    pub fn z(&self, branch: Branch) -> &Tensor {
        match branch {
            Branch::Luma => &self.z_lum,
            Branch::Chroma => &self.z_chroma,
        }
    }

    pub fn sigma(&self, branch: Branch) -> &Tensor {
        match branch {
            Branch::Luma => &self.sigma_lum,
            Branch::Chroma => &self.sigma_chroma,
        }
    }

    /// Latent spatial size `(h, w)`.
    pub fn latent_size(&self) -> (usize, usize) {
        let s = self.y_lum.shape();
        (s[2], s[3])
    }
}

/// Smallest multiples of the model's downsampling factor covering the image.
pub fn padded_size(config: &ModelConfig, width: usize, height: usize) -> (usize, usize) {
    let f = config.downsample_factor();
    (width.div_ceil(f) * f, height.div_ceil(f) * f)
}

/// Reflect-pads the right and bottom edges to [`padded_size`].
pub fn pad_to_multiple(config: &ModelConfig, img: &ImageRGB) -> ImageRGB {
    img.pad_reflect(config.downsample_factor())
}

/// Latent scales of one branch predicted from a quantized hyperlatent.
/// The encoder and decoder both use this, so their scales agree bit for bit.
pub fn scales_from_hyperlatent(model: &Model, branch: Branch, z_hat: &Tensor, latent_size: (usize, usize)) -> Result<Tensor> {
    let tape = Tape::new();
    let p = model.bind(&tape, false);
    let z = tape.constant(z_hat.clone());
    let sigma = hyper_synthesis(&p, &model.config, branch, z, latent_size)?;
    Ok(sigma.value().as_ref().clone())
}

/// Rounds latents and hyperlatents and predicts the scales from the rounded
/// hyperlatents. The image is reflect-padded first.
pub fn encode_latents(model: &Model, img: &ImageRGB) -> Result<LatentBundle> {
    let padded = pad_to_multiple(&model.config, img);
    let yuv = rgb_to_yuv(&padded);
    let mut parts = Vec::new();
    for branch in Branch::ALL {
        let tape = Tape::new();
        let p = model.bind(&tape, false);
        let input = tape.constant(match branch {
            Branch::Luma => yuv.luma_tensor(),
            Branch::Chroma => yuv.chroma_tensor(),
        });
        let y = analysis(&p, &model.config, branch, input)?;
        let z = hyper_analysis(&p, &model.config, branch, y)?;
        let z_hat = round(z)?.value().as_ref().clone();
        let y_hat = round(y)?.value().as_ref().clone();
        if !y_hat.is_finite() || !z_hat.is_finite() {
            return Err(Error::numeric(format!("{branch} analysis produced non-finite latents")));
        }
        let (_, _, h, w) = y_hat.dims4()?;
        let sigma = scales_from_hyperlatent(model, branch, &z_hat, (h, w))?;
        parts.push((y_hat, z_hat, sigma));
    }
    let (c_part, l_part) = (parts.pop().unwrap(), parts.pop().unwrap());
    Ok(LatentBundle {
        y_lum: l_part.0,
        z_lum: l_part.1,
        sigma_lum: l_part.2,
        y_chroma: c_part.0,
        z_chroma: c_part.1,
        sigma_chroma: c_part.2,
    })
}

/// Synthesizes both branches, converts to RGB, crops to `width x height`
/// and clamps to `[0, 1]`.
pub fn decode_latents(model: &Model, bundle: &LatentBundle, width: usize, height: usize) -> Result<ImageRGB> {
    let (lh, lw) = bundle.latent_size();
    let f = model.config.downsample_factor();
    let (ph, pw) = (lh * f, lw * f);
    if width > pw || height > ph || width + f <= pw || height + f <= ph {
        return Err(Error::dim(format!(
            "latents of {lw}x{lh} cannot decode to a {width}x{height} image"
        )));
    }
    let mut planes = Vec::new();
    for branch in Branch::ALL {
        let y = bundle.y(branch);
        let (b, _, h, w) = y.dims4()?;
        if b != 1 || (h, w) != (lh, lw) {
            return Err(Error::dim(format!("{branch} latent has shape {:?}", y.shape())));
        }
        let tape = Tape::new();
        let p = model.bind(&tape, false);
        let x = synthesis(&p, &model.config, branch, tape.constant(y.clone()))?;
        let x = x.value().as_ref().clone();
        if !x.is_finite() {
            return Err(Error::numeric(format!("{branch} synthesis produced non-finite samples")));
        }
        planes.push(x);
    }
    let yuv = ImageYUV {
        width: pw,
        height: ph,
        y_plane: planes[0].data().to_vec(),
        uv_planes: planes[1].data().to_vec(),
    };
    yuv_to_rgb(&yuv).crop(0, 0, width, height)
}
