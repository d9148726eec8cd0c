//! Training images: a deterministic synthetic generator, directory loading
//! and random patch sampling.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::color::{read_image, ImageRGB};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Families of synthetic content.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Linear blend between two colours along a random direction.
    Gradient,
    /// Two-colour checkerboard with random cell size and phase.
    Checkerboard,
    /// Gaussian colour blobs over a flat background.
    Blobs,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 3] = [SyntheticKind::Gradient, SyntheticKind::Checkerboard, SyntheticKind::Blobs];
}

fn color(rng: &mut impl Rng) -> [f64; 3] {
    [rng.random(), rng.random(), rng.random()]
}

/// One synthetic image of the given kind.
pub fn synthetic_image(kind: SyntheticKind, width: usize, height: usize, rng: &mut impl Rng) -> ImageRGB {
    match kind {
        SyntheticKind::Gradient => {
            let (a, b) = (color(rng), color(rng));
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let (dx, dy) = (angle.cos(), angle.sin());
            // Project the corners to normalize the ramp to [0, 1].
            let proj = |x: f64, y: f64| x * dx + y * dy;
            let (w, h) = (width as f64, height as f64);
            let corners = [proj(0.0, 0.0), proj(w, 0.0), proj(0.0, h), proj(w, h)];
            let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            ImageRGB::from_fn(width, height, |x, y| {
                let t = (proj(x as f64 + 0.5, y as f64 + 0.5) - lo) / (hi - lo).max(1e-12);
                std::array::from_fn(|c| a[c] + t * (b[c] - a[c]))
            })
        }
        SyntheticKind::Checkerboard => {
            let (a, b) = (color(rng), color(rng));
            let cell = rng.random_range(2..=16usize);
            let (ox, oy) = (rng.random_range(0..cell), rng.random_range(0..cell));
            ImageRGB::from_fn(width, height, |x, y| if ((x + ox) / cell + (y + oy) / cell) % 2 == 0 { a } else { b })
        }
        SyntheticKind::Blobs => {
            let bg = color(rng);
            let scale = width.min(height) as f64;
            let blobs: Vec<([f64; 3], f64, f64, f64)> = (0..rng.random_range(2..=6))
                .map(|_| {
                    let c = color(rng);
                    let cx = rng.random::<f64>() * width as f64;
                    let cy = rng.random::<f64>() * height as f64;
                    let r = scale * (0.05 + 0.25 * rng.random::<f64>());
                    (c, cx, cy, r)
                })
                .collect();
            ImageRGB::from_fn(width, height, |x, y| {
                let mut px = bg;
                for (c, cx, cy, r) in &blobs {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    let wgt = (-d2 / (2.0 * r * r)).exp();
                    for k in 0..3 {
                        px[k] += wgt * (c[k] - px[k]);
                    }
                }
                px
            })
        }
    }
}

/// `count` synthetic images cycling through every kind, reproducible from `seed`.
pub fn synthetic_dataset(count: usize, width: usize, height: usize, seed: u64) -> Vec<ImageRGB> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| synthetic_image(SyntheticKind::ALL[i % SyntheticKind::ALL.len()], width, height, &mut rng))
        .collect()
}

/// Every readable image in `dir`, sorted by file name. Unreadable files are
/// skipped with a warning.
pub fn load_image_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, ImageRGB)>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::usage(format!("cannot read directory {}: {e}", dir.display())))?;
    let mut paths: Vec<_> = entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_file()).collect();
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        match read_image(&path) {
            Ok(img) => out.push((path.file_name().unwrap_or_default().to_string_lossy().into_owned(), img)),
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    Ok(out)
}

/// Uniform random square crops from the images at least `size` pixels in
/// both dimensions.
#[derive(Clone, Debug)]
pub struct PatchSampler<'a> {
    images: Vec<&'a ImageRGB>,
    size: usize,
}

impl<'a> PatchSampler<'a> {
    pub fn new(images: &'a [ImageRGB], size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::usage("patch size must be positive"));
        }
        let mut usable = Vec::new();
        for (i, img) in images.iter().enumerate() {
            if img.width() >= size && img.height() >= size {
                usable.push(img);
            } else {
                log::warn!("skipping training image {i}: {}x{} is smaller than the {size}px patch", img.width(), img.height());
            }
        }
        if usable.is_empty() {
            return Err(Error::usage(format!("no training image is at least {size}x{size}")));
        }
        Ok(Self { images: usable, size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of images large enough to sample from.
    pub fn usable(&self) -> usize {
        self.images.len()
    }

    /// `(image index among the usable ones, x, y)` of one crop.
    pub fn origin(&self, rng: &mut impl Rng) -> (usize, usize, usize) {
        let i = rng.random_range(0..self.images.len());
        let img = self.images[i];
        let x = rng.random_range(0..=img.width() - self.size);
        let y = rng.random_range(0..=img.height() - self.size);
        (i, x, y)
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<ImageRGB> {
        (0..n)
            .map(|_| {
                let (i, x, y) = self.origin(rng);
                self.images[i].crop(x, y, self.size, self.size).expect("crop lies inside the image")
            })
            .collect()
    }
}

/// `n` patches of `size` pixels drawn with a generator seeded by `seed`.
pub fn sample_patches(dataset: &[ImageRGB], n: usize, size: usize, seed: u64) -> Result<Vec<ImageRGB>> {
    let sampler = PatchSampler::new(dataset, size)?;
    Ok(sampler.sample(n, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Stacks equally sized images into a `[B, 3, H, W]` tensor.
pub fn batch_tensor(images: &[ImageRGB]) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| Error::usage("empty batch"))?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(images.len() * 3 * w * h);
    for img in images {
        if (img.width(), img.height()) != (w, h) {
            return Err(Error::dim("batch images differ in size"));
        }
        data.extend_from_slice(img.planes());
    }
    Tensor::new(&[images.len(), 3, h, w], data)
}
