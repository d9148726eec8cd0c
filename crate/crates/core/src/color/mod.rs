//! Colour-space conversions (sRGB, YUV, CIELAB) and quality metrics.

mod io;
mod lab;
mod real;
mod ssim;

pub use io::{read_image, to_rgb8, write_image};
pub use lab::{ciede2000, ciede2000_generic, srgb_to_lab, srgb_to_lab_generic, Lab};
pub use real::{Dual, Real};
pub use ssim::{ms_ssim, ms_ssim_db, ms_ssim_var, ms_ssim_weights, MS_SSIM_WEIGHTS, SSIM_WINDOW};

use crate::error::{Error, Result};
use crate::par::*;
use crate::tensor::{Tensor, Var};

/// BT.601 luma weights.
const KR: f64 = 0.299;
const KB: f64 = 0.114;
const KG: f64 = 1.0 - KR - KB;

/// Full-range BT.601 RGB -> YUV, U and V zero-centred.
pub const RGB_TO_YUV: [[f64; 3]; 3] = [
    [KR, KG, KB],
    [-0.5 * KR / (1.0 - KB), -0.5 * KG / (1.0 - KB), 0.5],
    [0.5, -0.5 * KG / (1.0 - KR), -0.5 * KB / (1.0 - KR)],
];

/// Exact inverse of [`RGB_TO_YUV`].
pub const YUV_TO_RGB: [[f64; 3]; 3] = [
    [1.0, 0.0, 2.0 * (1.0 - KR)],
    [1.0, -2.0 * (1.0 - KB) * KB / KG, -2.0 * (1.0 - KR) * KR / KG],
    [1.0, 2.0 * (1.0 - KB), 0.0],
];

/// Planar RGB image with unit-range samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRGB {
    width: usize,
    height: usize,
    /// `3 x height x width`, plane-major.
    planes: Vec<f64>,
}

impl ImageRGB {
    pub fn new(width: usize, height: usize, planes: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::dim("image must be non-empty"));
        }
        if planes.len() != 3 * width * height {
            return Err(Error::dim(format!(
                "{width}x{height} RGB image needs {} samples, got {}",
                3 * width * height,
                planes.len()
            )));
        }
        Ok(Self {
            width,
            height,
            planes,
        })
    }

    /// Builds an image from `f(x, y) -> [r, g, b]`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Self {
        let plane = width * height;
        let mut planes = vec![0.0; 3 * plane];
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for c in 0..3 {
                    planes[c * plane + y * width + x] = px[c];
                }
            }
        }
        Self {
            width,
            height,
            planes,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn planes(&self) -> &[f64] {
        &self.planes
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let plane = self.width * self.height;
        let i = y * self.width + x;
        [self.planes[i], self.planes[plane + i], self.planes[2 * plane + i]]
    }

    pub fn clamped(mut self) -> Self {
        self.planes.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        self
    }

    /// `[1, 3, H, W]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[1, 3, self.height, self.width], self.planes.clone()).expect("consistent shape")
    }

    /// Image from one item of a `[B, 3, H, W]` tensor, clamped to `[0, 1]`.
    pub fn from_tensor(t: &Tensor, index: usize) -> Result<Self> {
        let (b, c, h, w) = t.dims4()?;
        if c != 3 || index >= b {
            return Err(Error::dim(format!("cannot take RGB image {index} of {:?}", t.shape())));
        }
        let n = 3 * h * w;
        Ok(Self::new(w, h, t.data()[index * n..(index + 1) * n].to_vec())?.clamped())
    }

    /// Top-left `width x height` window.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height || width == 0 || height == 0 {
            return Err(Error::dim(format!(
                "crop {width}x{height}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        let src = self.width * self.height;
        let mut planes = Vec::with_capacity(3 * width * height);
        for c in 0..3 {
            for y in y0..y0 + height {
                let row = c * src + y * self.width + x0;
                planes.extend_from_slice(&self.planes[row..row + width]);
            }
        }
        Self::new(width, height, planes)
    }

    /// Reflect-pads on the bottom/right up to the next multiple of `m`.
    pub fn pad_reflect(&self, m: usize) -> Self {
        let (w, h) = (self.width.div_ceil(m) * m, self.height.div_ceil(m) * m);
        if (w, h) == (self.width, self.height) {
            return self.clone();
        }
        Self::from_fn(w, h, |x, y| self.pixel(reflect(x, self.width), reflect(y, self.height)))
    }
}

/// Mirror index without repeating the edge sample, periodic for any length.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// Full-resolution (4:4:4) YUV image; Y in `[0, 1]`, U and V in `[-0.5, 0.5]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageYUV {
    pub width: usize,
    pub height: usize,
    /// `1 x H x W`
    pub y_plane: Vec<f64>,
    /// `2 x H x W` (U then V)
    pub uv_planes: Vec<f64>,
}

impl ImageYUV {
    /// `[1, 1, H, W]` luma tensor.
    pub fn luma_tensor(&self) -> Tensor {
        Tensor::new(&[1, 1, self.height, self.width], self.y_plane.clone()).expect("consistent shape")
    }

    /// `[1, 2, H, W]` chroma tensor.
    pub fn chroma_tensor(&self) -> Tensor {
        Tensor::new(&[1, 2, self.height, self.width], self.uv_planes.clone()).expect("consistent shape")
    }
}

fn mix(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

pub fn rgb_to_yuv(img: &ImageRGB) -> ImageYUV {
    let plane = img.width * img.height;
    let mut y_plane = vec![0.0; plane];
    let mut uv_planes = vec![0.0; 2 * plane];
    for i in 0..plane {
        let v = mix(&RGB_TO_YUV, [img.planes[i], img.planes[plane + i], img.planes[2 * plane + i]]);
        y_plane[i] = v[0];
        uv_planes[i] = v[1];
        uv_planes[plane + i] = v[2];
    }
    ImageYUV {
        width: img.width,
        height: img.height,
        y_plane,
        uv_planes,
    }
}

/// Inverse of [`rgb_to_yuv`], clamped to `[0, 1]`.
pub fn yuv_to_rgb(img: &ImageYUV) -> ImageRGB {
    yuv_to_rgb_unclamped(img).clamped()
}

pub(crate) fn yuv_to_rgb_unclamped(img: &ImageYUV) -> ImageRGB {
    let plane = img.width * img.height;
    let mut planes = vec![0.0; 3 * plane];
    for i in 0..plane {
        let v = mix(&YUV_TO_RGB, [img.y_plane[i], img.uv_planes[i], img.uv_planes[plane + i]]);
        for c in 0..3 {
            planes[c * plane + i] = v[c];
        }
    }
    ImageRGB {
        width: img.width,
        height: img.height,
        planes,
    }
}

fn check_same(x: &ImageRGB, y: &ImageRGB) -> Result<()> {
    if (x.width, x.height) != (y.width, y.height) {
        return Err(Error::dim(format!(
            "image sizes differ: {}x{} vs {}x{}",
            x.width, x.height, y.width, y.height
        )));
    }
    Ok(())
}

pub fn mse(x: &ImageRGB, y: &ImageRGB) -> Result<f64> {
    check_same(x, y)?;
    let n = x.planes.len() as f64;
    Ok(x.planes.iter().zip(&y.planes).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

/// `10 log10(1 / MSE)`; `+inf` for identical images.
pub fn psnr(x: &ImageRGB, y: &ImageRGB) -> Result<f64> {
    let m = mse(x, y)?;
    Ok(if m == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / m).log10() })
}

/// Mean per-pixel CIEDE2000 between two sRGB images.
pub fn ciede2000_image(x: &ImageRGB, y: &ImageRGB) -> Result<f64> {
    check_same(x, y)?;
    let n = x.width * x.height;
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let (px, py) = (x.pixel(i % x.width, i / x.width), y.pixel(i % y.width, i / y.width));
            ciede2000(srgb_to_lab(px), srgb_to_lab(py))
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(total / n as f64)
}

/// Differentiable mean CIEDE2000 between a fixed reference batch and a
/// reconstruction, both `[B, 3, H, W]` in sRGB.
pub fn ciede2000_var<'t>(reference: &Tensor, recon: Var<'t>) -> Result<Var<'t>> {
    let rv = recon.value();
    if rv.shape() != reference.shape() {
        return Err(Error::dim(format!(
            "ciede2000: reference {:?} vs reconstruction {:?}",
            reference.shape(),
            rv.shape()
        )));
    }
    let (b, _, h, w) = rv.dims4()?;
    let plane = h * w;
    let n = b * plane;
    let (refd, recd) = (reference.data(), rv.data());
    let results: Vec<Dual<3>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let (bi, p) = (k / plane, k % plane);
            let base = bi * 3 * plane + p;
            let r = [0, 1, 2].map(|c| refd[base + c * plane]);
            let x: [Dual<3>; 3] = std::array::from_fn(|c| Dual::var(recd[base + c * plane], c));
            ciede2000_generic(srgb_to_lab_generic(r.map(Dual::cst)), srgb_to_lab_generic(x))
        })
        .collect();
    let value = results.iter().map(|d| d.v).sum::<f64>() / n as f64;
    let shape = rv.shape().to_vec();
    recon.tape().push(
        "ciede2000",
        Tensor::scalar(value),
        &[recon],
        Box::new(move |g| {
            let scale = g.data()[0] / n as f64;
            let mut gx = Tensor::zeros(&shape);
            for (k, d) in results.iter().enumerate() {
                let (bi, p) = (k / plane, k % plane);
                let base = bi * 3 * plane + p;
                for c in 0..3 {
                    gx.data_mut()[base + c * plane] = scale * d.d[c];
                }
            }
            vec![Some(gx)]
        }),
    )
}

/// Full-reference quality of a reconstruction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub mse: f64,
    pub psnr: f64,
    pub ms_ssim: f64,
    pub ms_ssim_db: f64,
    pub ciede2000: f64,
}

impl MetricReport {
    /// Computes every metric. MS-SSIM is NaN for images smaller than one
    /// SSIM window.
    pub fn compute(original: &ImageRGB, recon: &ImageRGB) -> Result<Self> {
        let mse = mse(original, recon)?;
        let ms = if original.width.min(original.height) >= SSIM_WINDOW {
            ms_ssim(original, recon)?
        } else {
            f64::NAN
        };
        Ok(Self {
            mse,
            psnr: if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() },
            ms_ssim: ms,
            ms_ssim_db: ms_ssim_db(ms),
            ciede2000: ciede2000_image(original, recon)?,
        })
    }
}
