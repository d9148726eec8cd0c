//! Channel impulse responses: the synthesis output for a 1x1 latent with a
//! single nonzero channel, ordered by each channel's share of the rate.

use crate::color::{yuv_to_rgb_unclamped, ImageRGB, ImageYUV};
use crate::entropy::estimate_rate_bits;
use crate::error::{Error, Result};
use crate::model::{encode_latents, synthesis, Branch, Model};
use crate::par::*;
use crate::tensor::{Tape, Tensor};

/// U and V planes paired with luminance impulses.
pub const NEUTRAL_CHROMA: f64 = 0.0;
/// Y plane paired with chrominance impulses.
pub const MID_LUMA: f64 = 0.5;
/// Sample value of grid separators and unused cells.
pub const SEPARATOR: f64 = 1.0;

/// Response of one latent channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Impulse {
    pub channel: usize,
    /// Signed latent value of largest magnitude in the channel.
    pub value: f64,
    /// `(row, col)` of that value in the latent grid.
    pub position: (usize, usize),
    /// Unclamped RGB synthesis of the impulse, one downsample factor square.
    pub tile: ImageRGB,
    /// Estimated bits the channel spends on the source image.
    pub bits: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImpulseSet {
    pub branch: Branch,
    pub entries: Vec<Impulse>,
}

pub const IMPULSE_CSV_HEADER: &str = "branch,rank,channel,bits,value,row,col";

impl ImpulseSet {
    /// CSV rows (without header) in the current order.
    pub fn csv_rows(&self) -> String {
        self.entries
            .iter()
            .enumerate()
            .map(|(rank, e)| {
                format!(
                    "{},{rank},{},{},{},{},{}\n",
                    self.branch.name(),
                    e.channel,
                    e.bits,
                    e.value,
                    e.position.0,
                    e.position.1
                )
            })
            .collect()
    }

    pub fn tiles(&self) -> Vec<&ImageRGB> {
        self.entries.iter().map(|e| &e.tile).collect()
    }
}

/// RGB synthesis of a `[1, C, 1, 1]` latent of one branch, with the other
/// branch's planes held at [`NEUTRAL_CHROMA`] or [`MID_LUMA`].
pub fn synthesize_tile(model: &Model, branch: Branch, latent: &[f64]) -> Result<ImageRGB> {
    let c = model.config.channels(branch);
    if latent.len() != c {
        return Err(Error::dim(format!("{branch} latent needs {c} values, got {}", latent.len())));
    }
    let tape = Tape::new();
    let p = model.bind(&tape, false);
    let y = tape.constant(Tensor::new(&[1, c, 1, 1], latent.to_vec())?);
    let out = synthesis(&p, &model.config, branch, y)?.value();
    let (_, _, h, w) = out.dims4()?;
    let plane = h * w;
    let yuv = match branch {
        Branch::Luma => ImageYUV {
            width: w,
            height: h,
            y_plane: out.data().to_vec(),
            uv_planes: vec![NEUTRAL_CHROMA; 2 * plane],
        },
        Branch::Chroma => ImageYUV {
            width: w,
            height: h,
            y_plane: vec![MID_LUMA; plane],
            uv_planes: out.data().to_vec(),
        },
    };
    let rgb = yuv_to_rgb_unclamped(&yuv);
    if !rgb.planes().iter().all(|v| v.is_finite()) {
        return Err(Error::numeric(format!("{branch} impulse response is not finite")));
    }
    Ok(rgb)
}

/// Response of the all-zero latent: the branch's bias image.
pub fn bias_tile(model: &Model, branch: Branch) -> Result<ImageRGB> {
    synthesize_tile(model, branch, &vec![0.0; model.config.channels(branch)])
}

/// Largest-magnitude entry of a `h x w` plane; the first in raster order
/// wins ties.
fn peak(plane: &[f64], w: usize) -> (f64, (usize, usize)) {
    let mut best = (0.0, 0);
    for (i, &v) in plane.iter().enumerate() {
        if v.abs() > f64::abs(best.0) {
            best = (v, i);
        }
    }
    (best.0, (best.1 / w, best.1 % w))
}

/// Impulse responses of every channel of `branch`, derived from the quantized
/// latents of `img`, in channel order.
pub fn impulse_responses(model: &Model, img: &ImageRGB, branch: Branch) -> Result<ImpulseSet> {
    let bundle = encode_latents(model, img)?;
    let rate = estimate_rate_bits(&bundle, model)?;
    let y = bundle.y(branch);
    let (_, c, h, w) = y.dims4()?;
    let peaks: Vec<(f64, (usize, usize))> = (0..c).map(|ch| peak(&y.data()[ch * h * w..(ch + 1) * h * w], w)).collect();
    let bits = rate.y_channels(branch);
    let entries = (0..c)
        .into_par_iter()
        .map(|ch| {
            let mut latent = vec![0.0; c];
            latent[ch] = peaks[ch].0;
            Ok(Impulse {
                channel: ch,
                value: peaks[ch].0,
                position: peaks[ch].1,
                tile: synthesize_tile(model, branch, &latent)?,
                bits: bits[ch],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImpulseSet { branch, entries })
}

/// Stable sort by descending bits; equal bits keep ascending channel order.
pub fn order_by_bitrate(mut set: ImpulseSet) -> ImpulseSet {
    set.entries
        .sort_by(|a, b| b.bits.total_cmp(&a.bits).then(a.channel.cmp(&b.channel)));
    set
}

/// Min-max normalization over all samples of a tile; a flat tile becomes
/// mid-gray.
pub fn normalize_tile(tile: &ImageRGB) -> ImageRGB {
    let lo = tile.planes().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tile.planes().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let planes = if hi > lo {
        tile.planes().iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.5; tile.planes().len()]
    };
    ImageRGB::new(tile.width(), tile.height(), planes).expect("same shape")
}

/// Row-major mosaic of normalized tiles with 1-pixel [`SEPARATOR`] lines
/// between cells and no outer border.
pub fn render_grid(tiles: &[&ImageRGB], columns: usize) -> Result<ImageRGB> {
    let first = tiles.first().ok_or_else(|| Error::usage("no tiles to render"))?;
    let (tw, th) = (first.width(), first.height());
    if tiles.iter().any(|t| (t.width(), t.height()) != (tw, th)) {
        return Err(Error::dim("tiles differ in size"));
    }
    if columns == 0 {
        return Err(Error::usage("grid needs at least one column"));
    }
    let cols = columns.min(tiles.len());
    let rows = tiles.len().div_ceil(cols);
    let (gw, gh) = (cols * (tw + 1) - 1, rows * (th + 1) - 1);
    let plane = gw * gh;
    let mut planes = vec![SEPARATOR; 3 * plane];
    for (i, tile) in tiles.iter().enumerate() {
        let n = normalize_tile(tile);
        let (x0, y0) = ((i % cols) * (tw + 1), (i / cols) * (th + 1));
        for c in 0..3 {
            for y in 0..th {
                let src = &n.planes()[c * tw * th + y * tw..][..tw];
                let dst = c * plane + (y0 + y) * gw + x0;
                planes[dst..dst + tw].copy_from_slice(src);
            }
        }
    }
    ImageRGB::new(gw, gh, planes)
}

/// Orthonormal 2-D DCT-II basis images of an `n x n` block, row-major over
/// `(vertical, horizontal)` frequency, in gray.
pub fn dct_basis(n: usize) -> Vec<ImageRGB> {
    let alpha = |k: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
    let basis = |k: usize, i: usize| alpha(k) * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
    let mut out = Vec::with_capacity(n * n);
    for v in 0..n {
        for u in 0..n {
            out.push(ImageRGB::from_fn(n, n, |x, y| [basis(v, y) * basis(u, x); 3]));
        }
    }
    out
}
