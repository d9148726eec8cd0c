//! Four-segment compressed image format.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "CLBS01" | version u8 | orig_w u32 | orig_h u32 | padded_w u32 | padded_h u32
//! | config_id u16 | lambda_id u16 | 4 x (segment length u32 | segment bytes)
//! ```
//!
//! Segments, in order: `z_lum`, `z_chroma`, `y_lum`, `y_chroma`. Each is an
//! independent range-coded stream of the tensor's values in `[C, H, W]`
//! raster order. Hyperlatents use the per-channel prior tables; latents use
//! the Gaussian table of the first scale at or above the predicted sigma.

use super::gaussian::scale_index;
use super::range::{RangeDecoder, RangeEncoder};
use super::rate::EntropyTables;
use crate::color::ImageRGB;
use crate::error::{Error, Result};
use crate::model::{decode_latents, encode_latents, padded_size, scales_from_hyperlatent, Branch, LatentBundle, Model};
use crate::tensor::Tensor;

pub const BITSTREAM_MAGIC: &[u8; 6] = b"CLBS01";
pub const BITSTREAM_VERSION: u8 = 1;
/// Largest accepted image area, guarding against corrupt headers.
const MAX_PIXELS: u64 = 1 << 26;
const HEADER_LEN: usize = 6 + 1 + 4 * 4 + 2 + 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompressedImage {
    pub orig_width: u32,
    pub orig_height: u32,
    pub padded_width: u32,
    pub padded_height: u32,
    pub config_id: u16,
    pub lambda_id: u16,
    /// `z_lum`, `z_chroma`, `y_lum`, `y_chroma`.
    pub segments: [Vec<u8>; 4],
}

impl CompressedImage {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len_bytes());
        out.extend_from_slice(BITSTREAM_MAGIC);
        out.push(BITSTREAM_VERSION);
        for v in [self.orig_width, self.orig_height, self.padded_width, self.padded_height] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.config_id.to_le_bytes());
        out.extend_from_slice(&self.lambda_id.to_le_bytes());
        for s in &self.segments {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s);
        }
        out
    }

    /// Total serialized size in bytes.
    pub fn len_bytes(&self) -> usize {
        HEADER_LEN + self.segments.iter().map(|s| 4 + s.len()).sum::<usize>()
    }

    /// Parses the container; checks magic, version, dimensions and lengths.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..6] != BITSTREAM_MAGIC {
            return Err(Error::format("not a compressed image (bad magic)"));
        }
        if bytes[6] != BITSTREAM_VERSION {
            return Err(Error::format(format!("unsupported bitstream version {}", bytes[6])));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let u16_at = |i: usize| u16::from_le_bytes(bytes[i..i + 2].try_into().expect("2 bytes"));
        let mut c = Self {
            orig_width: u32_at(7),
            orig_height: u32_at(11),
            padded_width: u32_at(15),
            padded_height: u32_at(19),
            config_id: u16_at(23),
            lambda_id: u16_at(25),
            segments: Default::default(),
        };
        if c.orig_width == 0 || c.orig_height == 0 || (c.orig_width as u64) * (c.orig_height as u64) > MAX_PIXELS {
            return Err(Error::format(format!("bad image size {}x{}", c.orig_width, c.orig_height)));
        }
        let mut pos = HEADER_LEN;
        for seg in &mut c.segments {
            if bytes.len() < pos + 4 {
                return Err(Error::format("bitstream truncated in a segment header"));
            }
            let len = u32_at(pos) as usize;
            pos += 4;
            if bytes.len() - pos < len {
                return Err(Error::format("bitstream truncated in a segment"));
            }
            *seg = bytes[pos..pos + len].to_vec();
            pos += len;
        }
        if pos != bytes.len() {
            return Err(Error::format(format!("{} trailing bytes after the last segment", bytes.len() - pos)));
        }
        Ok(c)
    }

    /// Payload size in bits, header and length prefixes included.
    pub fn total_bits(&self) -> usize {
        8 * self.len_bytes()
    }
}

fn encode_z(tables: &EntropyTables, branch: Branch, z: &Tensor) -> Result<Vec<u8>> {
    let (_, c, h, w) = z.dims4()?;
    let t = tables.prior(branch);
    let mut enc = RangeEncoder::new();
    for ch in 0..c {
        for &v in &z.data()[ch * h * w..(ch + 1) * h * w] {
            enc.encode(&t[ch], to_int(v)?);
        }
    }
    Ok(enc.finish())
}

fn encode_y(model: &Model, tables: &EntropyTables, y: &Tensor, sigma: &Tensor) -> Result<Vec<u8>> {
    let mut enc = RangeEncoder::new();
    for (&v, &s) in y.data().iter().zip(sigma.data()) {
        enc.encode(&tables.gaussian[scale_index(&model.scale_table, s)], to_int(v)?);
    }
    Ok(enc.finish())
}

fn to_int(v: f64) -> Result<i32> {
    if v.fract() != 0.0 || v.abs() > i32::MAX as f64 {
        return Err(Error::numeric(format!("latent value {v} is not a codable integer")));
    }
    Ok(v as i32)
}

/// Codes an already quantized bundle for an image of `width x height`.
pub fn compress_bundle(model: &Model, tables: &EntropyTables, bundle: &LatentBundle, width: usize, height: usize) -> Result<CompressedImage> {
    let (pw, ph) = padded_size(&model.config, width, height);
    let (lh, lw) = model.config.latent_size(ph, pw);
    if bundle.latent_size() != (lh, lw) {
        return Err(Error::dim(format!("bundle latents {:?} do not fit a {width}x{height} image", bundle.latent_size())));
    }
    Ok(CompressedImage {
        orig_width: width as u32,
        orig_height: height as u32,
        padded_width: pw as u32,
        padded_height: ph as u32,
        config_id: model.config.config_id(),
        lambda_id: model.weights.id(),
        segments: [
            encode_z(tables, Branch::Luma, &bundle.z_lum)?,
            encode_z(tables, Branch::Chroma, &bundle.z_chroma)?,
            encode_y(model, tables, &bundle.y_lum, &bundle.sigma_lum)?,
            encode_y(model, tables, &bundle.y_chroma, &bundle.sigma_chroma)?,
        ],
    })
}

/// Encodes an image: quantized latents, then four range-coded segments.
pub fn compress_image(model: &Model, img: &ImageRGB) -> Result<CompressedImage> {
    let tables = EntropyTables::new(model)?;
    let bundle = encode_latents(model, img)?;
    compress_bundle(model, &tables, &bundle, img.width(), img.height())
}

fn decode_segment(bytes: &[u8], count: usize, mut table_of: impl FnMut(usize) -> usize, tables: &[super::cdf::CdfTable]) -> Result<Vec<f64>> {
    let mut dec = RangeDecoder::new(bytes)?;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        out.push(dec.decode(&tables[table_of(i)])? as f64);
    }
    dec.finish()?;
    Ok(out)
}

/// Recovers the quantized latents (and the scales the decoder derives from
/// them) from a bitstream.
pub fn decode_bundle(model: &Model, tables: &EntropyTables, c: &CompressedImage) -> Result<LatentBundle> {
    if c.config_id != model.config.config_id() {
        return Err(Error::format(format!(
            "bitstream was made for model configuration {:#06x}, this model is {:#06x}",
            c.config_id,
            model.config.config_id()
        )));
    }
    let (w, h) = (c.orig_width as usize, c.orig_height as usize);
    if padded_size(&model.config, w, h) != (c.padded_width as usize, c.padded_height as usize) {
        return Err(Error::format("padded size in header does not match the image size"));
    }
    let (lh, lw) = model.config.latent_size(c.padded_height as usize, c.padded_width as usize);
    let (zh, zw) = model.config.hyper_size(lh, lw);
    let mut parts = Vec::new();
    for (k, branch) in Branch::ALL.into_iter().enumerate() {
        let zc = model.config.hyper_channels(branch);
        let zplane = zh * zw;
        let z = decode_segment(&c.segments[k], zc * zplane, |i| i / zplane, tables.prior(branch))?;
        let z = Tensor::new(&[1, zc, zh, zw], z)?;
        let sigma = scales_from_hyperlatent(model, branch, &z, (lh, lw))?;
        let yc = model.config.channels(branch);
        let sd = sigma.data();
        let y = decode_segment(&c.segments[2 + k], yc * lh * lw, |i| scale_index(&model.scale_table, sd[i]), &tables.gaussian)?;
        parts.push((Tensor::new(&[1, yc, lh, lw], y)?, z, sigma));
    }
    let (chroma, lum) = (parts.pop().unwrap(), parts.pop().unwrap());
    Ok(LatentBundle {
        y_lum: lum.0,
        z_lum: lum.1,
        sigma_lum: lum.2,
        y_chroma: chroma.0,
        z_chroma: chroma.1,
        sigma_chroma: chroma.2,
    })
}

/// Decodes a bitstream to an image of the original size.
pub fn decompress_image(model: &Model, c: &CompressedImage) -> Result<ImageRGB> {
    let tables = EntropyTables::new(model)?;
    let bundle = decode_bundle(model, &tables, c)?;
    decode_latents(model, &bundle, c.orig_width as usize, c.orig_height as usize)
}
