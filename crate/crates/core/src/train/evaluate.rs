//! Rate-distortion evaluation through the real bitstream.

use crate::color::{ImageRGB, MetricReport};
use crate::entropy::{compress_bundle, decode_bundle, CompressedImage, EntropyTables};
use crate::error::Result;
use crate::model::{decode_latents, encode_latents, Model};
use crate::par::*;

/// Rate and quality of one image (or a mean over images).
#[derive(Clone, Debug, PartialEq)]
pub struct RdRecord {
    pub name: String,
    /// Bitstream bytes times 8 over the original pixel count.
    pub bpp: f64,
    pub psnr_db: f64,
    pub msssim: f64,
    pub msssim_db: f64,
    pub ciede2000: f64,
}

pub const RD_HEADER: [&str; 5] = ["bpp", "psnr_db", "msssim", "msssim_db", "ciede2000"];

impl RdRecord {
    pub fn values(&self) -> [f64; 5] {
        [self.bpp, self.psnr_db, self.msssim, self.msssim_db, self.ciede2000]
    }

    /// Field-wise mean of `records`.
    pub fn mean(name: impl Into<String>, records: &[RdRecord]) -> RdRecord {
        let n = records.len() as f64;
        let m = |f: fn(&RdRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        RdRecord {
            name: name.into(),
            bpp: m(|r| r.bpp),
            psnr_db: m(|r| r.psnr_db),
            msssim: m(|r| r.msssim),
            msssim_db: m(|r| r.msssim_db),
            ciede2000: m(|r| r.ciede2000),
        }
    }
}

/// Compresses, serializes, parses and decompresses `img`, returning the
/// bitstream and the reconstruction.
pub fn round_trip(model: &Model, tables: &EntropyTables, img: &ImageRGB) -> Result<(Vec<u8>, ImageRGB)> {
    let bundle = encode_latents(model, img)?;
    let bytes = compress_bundle(model, tables, &bundle, img.width(), img.height())?.to_bytes();
    let parsed = CompressedImage::from_bytes(&bytes)?;
    let decoded = decode_bundle(model, tables, &parsed)?;
    let recon = decode_latents(model, &decoded, img.width(), img.height())?;
    Ok((bytes, recon))
}

/// Rate from the bitstream size plus every quality metric.
pub fn evaluate_image(model: &Model, tables: &EntropyTables, name: &str, img: &ImageRGB) -> Result<(RdRecord, MetricReport)> {
    let (bytes, recon) = round_trip(model, tables, img)?;
    let m = MetricReport::compute(img, &recon)?;
    let record = RdRecord {
        name: name.to_string(),
        bpp: (bytes.len() * 8) as f64 / (img.width() * img.height()) as f64,
        psnr_db: m.psnr,
        msssim: m.ms_ssim,
        msssim_db: m.ms_ssim_db,
        ciede2000: m.ciede2000,
    };
    Ok((record, m))
}

/// [`evaluate_image`] over a list, images processed concurrently, output in
/// input order.
pub fn evaluate(model: &Model, images: &[(String, ImageRGB)]) -> Result<Vec<RdRecord>> {
    let tables = EntropyTables::new(model)?;
    images
        .par_iter()
        .map(|(name, img)| evaluate_image(model, &tables, name, img).map(|(r, _)| r))
        .collect()
}

/// Unnamed variant of [`evaluate`] that also returns the metric reports.
pub fn evaluate_images(model: &Model, images: &[ImageRGB]) -> Result<Vec<(RdRecord, MetricReport)>> {
    let tables = EntropyTables::new(model)?;
    images
        .par_iter()
        .enumerate()
        .map(|(i, img)| evaluate_image(model, &tables, &format!("image{i}"), img))
        .collect()
}
