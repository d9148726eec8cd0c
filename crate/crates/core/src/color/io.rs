//! 8-bit PNG / binary PPM reading and writing.

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat, Rgb, RgbImage};

use super::ImageRGB;
use crate::error::{Error, Result};

/// Reads an image as unit-range RGB (`value / 255`).
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageRGB> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(ImageRGB::from_fn(w, h, |x, y| {
        let p = img.get_pixel(x as u32, y as u32);
        [0, 1, 2].map(|c| p[c] as f64 / 255.0)
    }))
}

/// Quantizes to 8 bits (`round(value * 255)`, clamped).
pub fn to_rgb8(img: &ImageRGB) -> RgbImage {
    RgbImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let p = img.pixel(x as usize, y as usize);
        Rgb(p.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
    })
}

/// Writes PNG, or binary PPM when the extension is `.ppm`/`.pnm`.
///
/// The file is written next to its destination and renamed into place.
pub fn write_image(img: &ImageRGB, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ppm = matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("ppm" | "pnm")
    );
    let rgb = to_rgb8(img);
    let mut buf = std::io::Cursor::new(Vec::new());
    let written = if ppm {
        PnmEncoder::new(&mut buf)
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(rgb.as_raw(), rgb.width(), rgb.height(), ExtendedColorType::Rgb8)
    } else {
        rgb.write_to(&mut buf, ImageFormat::Png)
    };
    written.map_err(|e| Error::Image(e.to_string()))?;
    crate::write_atomic(path, buf.get_ref())
}
