//! 2-d convolution and its adjoint (transposed convolution).

use std::rc::Rc;

use super::{Tensor, Var};
use crate::error::{Error, Result};
use crate::par::*;

/// Spatial zero padding of a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output spatial size is `ceil(input / stride)`; any odd padding goes
    /// to the bottom/right.
    Same,
    /// Explicit `(top, bottom, left, right)` padding.
    Explicit {
        top: usize,
        bottom: usize,
        left: usize,
        right: usize,
    },
}

/// `(pad_before, output_len)` for "same" padding along one axis.
pub fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out.saturating_sub(1)) * stride + kernel).saturating_sub(input);
    (total / 2, out)
}

/// Output length along one axis for explicit padding.
pub fn conv_output_len(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    (input + pad).checked_sub(kernel).map(|v| v / stride + 1)
}

/// Geometry of a strided convolution mapping `in_h x in_w` to `out_h x out_w`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Geometry {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl Geometry {
    /// Range of output indices `o` for which `o * stride + k - pad` lands in
    /// `[0, len)`.
    fn valid(&self, k: usize, pad: usize, len: usize, out: usize) -> (usize, usize) {
        let lo = if pad > k {
            (pad - k).div_ceil(self.stride)
        } else {
            0
        };
        let hi = if len + pad > k {
            ((len + pad - k - 1) / self.stride + 1).min(out)
        } else {
            0
        };
        (lo.min(out), hi.max(lo).min(out))
    }

    /// Cross-correlation `y = conv(x, k) + bias`.
    pub fn forward(&self, x: &[f64], k: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
        let g = *self;
        let (oplane, iplane) = (g.out_h * g.out_w, g.in_h * g.in_w);
        let mut y = vec![0.0; g.batch * g.out_ch * oplane];
        y.par_chunks_mut(oplane).enumerate().for_each(|(idx, out)| {
            let (b, oc) = (idx / g.out_ch, idx % g.out_ch);
            if let Some(bias) = bias {
                out.fill(bias[oc]);
            }
            for ic in 0..g.in_ch {
                let xp = &x[(b * g.in_ch + ic) * iplane..][..iplane];
                let kp = &k[(oc * g.in_ch + ic) * g.kh * g.kw..][..g.kh * g.kw];
                for ky in 0..g.kh {
                    let (oy0, oy1) = g.valid(ky, g.pad_top, g.in_h, g.out_h);
                    if oy0 >= oy1 {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let w = kp[ky * g.kw + kx];
                        if w == 0.0 {
                            continue;
                        }
                        let (ox0, ox1) = g.valid(kx, g.pad_left, g.in_w, g.out_w);
                        if ox0 >= ox1 {
                            continue;
                        }
                        for oy in oy0..oy1 {
                            let iy = oy * g.stride + ky - g.pad_top;
                            let xrow = &xp[iy * g.in_w..][..g.in_w];
                            let orow = &mut out[oy * g.out_w..][..g.out_w];
                            if g.stride == 1 {
                                let off = kx as isize - g.pad_left as isize;
                                let src = &xrow[(ox0 as isize + off) as usize..(ox1 as isize + off) as usize];
                                for (o, s) in orow[ox0..ox1].iter_mut().zip(src) {
                                    *o += w * s;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    orow[ox] += w * xrow[ox * g.stride + kx - g.pad_left];
                                }
                            }
                        }
                    }
                }
            }
        });
        y
    }

    /// Adjoint of [`Geometry::forward`] with respect to its input.
    pub fn backward_input(&self, gy: &[f64], k: &[f64]) -> Vec<f64> {
        let g = *self;
        let (oplane, iplane) = (g.out_h * g.out_w, g.in_h * g.in_w);
        let mut gx = vec![0.0; g.batch * g.in_ch * iplane];
        gx.par_chunks_mut(iplane).enumerate().for_each(|(idx, dst)| {
            let (b, ic) = (idx / g.in_ch, idx % g.in_ch);
            for oc in 0..g.out_ch {
                let gp = &gy[(b * g.out_ch + oc) * oplane..][..oplane];
                let kp = &k[(oc * g.in_ch + ic) * g.kh * g.kw..][..g.kh * g.kw];
                for ky in 0..g.kh {
                    let (oy0, oy1) = g.valid(ky, g.pad_top, g.in_h, g.out_h);
                    if oy0 >= oy1 {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let w = kp[ky * g.kw + kx];
                        if w == 0.0 {
                            continue;
                        }
                        let (ox0, ox1) = g.valid(kx, g.pad_left, g.in_w, g.out_w);
                        if ox0 >= ox1 {
                            continue;
                        }
                        for oy in oy0..oy1 {
                            let iy = oy * g.stride + ky - g.pad_top;
                            let grow = &gp[oy * g.out_w..][..g.out_w];
                            let drow = &mut dst[iy * g.in_w..][..g.in_w];
                            if g.stride == 1 {
                                let off = kx as isize - g.pad_left as isize;
                                let d = &mut drow[(ox0 as isize + off) as usize..(ox1 as isize + off) as usize];
                                for (o, s) in d.iter_mut().zip(&grow[ox0..ox1]) {
                                    *o += w * s;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    drow[ox * g.stride + kx - g.pad_left] += w * grow[ox];
                                }
                            }
                        }
                    }
                }
            }
        });
        gx
    }

    /// Gradient of `<forward(x, k), gy>` with respect to the kernel.
    pub fn backward_kernel(&self, x: &[f64], gy: &[f64]) -> Vec<f64> {
        let g = *self;
        let (oplane, iplane) = (g.out_h * g.out_w, g.in_h * g.in_w);
        let ksize = g.kh * g.kw;
        let mut gk = vec![0.0; g.out_ch * g.in_ch * ksize];
        gk.par_chunks_mut(ksize).enumerate().for_each(|(idx, dst)| {
            let (oc, ic) = (idx / g.in_ch, idx % g.in_ch);
            for b in 0..g.batch {
                let gp = &gy[(b * g.out_ch + oc) * oplane..][..oplane];
                let xp = &x[(b * g.in_ch + ic) * iplane..][..iplane];
                for ky in 0..g.kh {
                    let (oy0, oy1) = g.valid(ky, g.pad_top, g.in_h, g.out_h);
                    if oy0 >= oy1 {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let (ox0, ox1) = g.valid(kx, g.pad_left, g.in_w, g.out_w);
                        if ox0 >= ox1 {
                            continue;
                        }
                        let mut acc = 0.0;
                        for oy in oy0..oy1 {
                            let iy = oy * g.stride + ky - g.pad_top;
                            let grow = &gp[oy * g.out_w..][..g.out_w];
                            let xrow = &xp[iy * g.in_w..][..g.in_w];
                            if g.stride == 1 {
                                let off = kx as isize - g.pad_left as isize;
                                let src = &xrow[(ox0 as isize + off) as usize..(ox1 as isize + off) as usize];
                                acc += grow[ox0..ox1].iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                            } else {
                                for ox in ox0..ox1 {
                                    acc += grow[ox] * xrow[ox * g.stride + kx - g.pad_left];
                                }
                            }
                        }
                        dst[ky * g.kw + kx] += acc;
                    }
                }
            }
        });
        gk
    }

    /// Per-output-channel sum of `gy`.
    pub fn backward_bias(&self, gy: &[f64], channels: usize, plane: usize) -> Vec<f64> {
        let mut gb = vec![0.0; channels];
        for (i, p) in gy.chunks(plane).enumerate() {
            gb[i % channels] += p.iter().sum::<f64>();
        }
        gb
    }
}

fn check_bias(bias: Option<&Tensor>, channels: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.len() != channels {
            return Err(Error::dim(format!(
                "bias has {} entries for {channels} channels",
                b.len()
            )));
        }
    }
    Ok(())
}

/// Strided 2-d cross-correlation.
///
/// `input` is `[B, Cin, H, W]`, `kernel` is `[Cout, Cin, KH, KW]`, `bias`
/// has `Cout` entries.
pub fn conv2d<'t>(
    input: Var<'t>,
    kernel: Var<'t>,
    bias: Option<Var<'t>>,
    stride: usize,
    padding: Padding,
) -> Result<Var<'t>> {
    let (xv, kv) = (input.value(), kernel.value());
    let (b, c, h, w) = xv.dims4()?;
    let (oc, ic, kh, kw) = kv.dims4()?;
    if ic != c {
        return Err(Error::dim(format!(
            "conv2d: kernel expects {ic} input channels, input has {c}"
        )));
    }
    if stride == 0 {
        return Err(Error::usage("conv2d: stride must be positive"));
    }
    let bv = bias.map(|v| v.value());
    check_bias(bv.as_deref(), oc)?;
    let (pad_top, out_h, pad_left, out_w) = match padding {
        Padding::Same => {
            let (pt, oh) = same_padding(h, kh, stride);
            let (pl, ow) = same_padding(w, kw, stride);
            (pt, oh, pl, ow)
        }
        Padding::Explicit {
            top,
            bottom,
            left,
            right,
        } => {
            let oh = conv_output_len(h, kh, stride, top + bottom);
            let ow = conv_output_len(w, kw, stride, left + right);
            match (oh, ow) {
                (Some(oh), Some(ow)) => (top, oh, left, ow),
                _ => return Err(Error::dim("conv2d: kernel larger than padded input")),
            }
        }
    };
    let geo = Geometry {
        batch: b,
        in_ch: c,
        out_ch: oc,
        in_h: h,
        in_w: w,
        out_h,
        out_w,
        kh,
        kw,
        stride,
        pad_top,
        pad_left,
    };
    let y = geo.forward(xv.data(), kv.data(), bv.as_ref().map(|t| t.data()));
    let out = Tensor::new(&[b, oc, out_h, out_w], y)?;
    let mut parents = vec![input, kernel];
    parents.extend(bias);
    let has_bias = bias.is_some();
    input.tape().push(
        "conv2d",
        out,
        &parents,
        Box::new(move |g| {
            let gx = geo.backward_input(g.data(), kv.data());
            let gk = geo.backward_kernel(xv.data(), g.data());
            let mut grads = vec![
                Tensor::new(xv.shape(), gx).ok(),
                Tensor::new(kv.shape(), gk).ok(),
            ];
            if has_bias {
                let gb = geo.backward_bias(g.data(), oc, out_h * out_w);
                grads.push(Tensor::new(&[oc], gb).ok());
            }
            grads
        }),
    )
}

/// Transposed convolution producing `stride`-times larger planes.
///
/// This is the adjoint of [`conv2d`] with "same" padding on the upsampled
/// size. The kernel is laid out `[Cin, Cout, KH, KW]`, i.e. the shape of the
/// convolution it is the adjoint of. `bias` has `Cout` entries.
pub fn transposed_conv2d<'t>(
    input: Var<'t>,
    kernel: Var<'t>,
    bias: Option<Var<'t>>,
    stride: usize,
) -> Result<Var<'t>> {
    let (xv, kv) = (input.value(), kernel.value());
    let (b, c, h, w) = xv.dims4()?;
    let (kc, oc, kh, kw) = kv.dims4()?;
    if kc != c {
        return Err(Error::dim(format!(
            "transposed_conv2d: kernel expects {kc} input channels, input has {c}"
        )));
    }
    if stride == 0 {
        return Err(Error::usage("transposed_conv2d: stride must be positive"));
    }
    let bv = bias.map(|v| v.value());
    check_bias(bv.as_deref(), oc)?;
    let (out_h, out_w) = (h * stride, w * stride);
    let (pad_top, _) = same_padding(out_h, kh, stride);
    let (pad_left, _) = same_padding(out_w, kw, stride);
    // Geometry of the forward convolution this op is the adjoint of.
    let geo = Geometry {
        batch: b,
        in_ch: oc,
        out_ch: c,
        in_h: out_h,
        in_w: out_w,
        out_h: h,
        out_w: w,
        kh,
        kw,
        stride,
        pad_top,
        pad_left,
    };
    let mut y = geo.backward_input(xv.data(), kv.data());
    if let Some(bv) = &bv {
        let plane = out_h * out_w;
        for (i, p) in y.chunks_mut(plane).enumerate() {
            let bias = bv.data()[i % oc];
            p.iter_mut().for_each(|v| *v += bias);
        }
    }
    let out = Tensor::new(&[b, oc, out_h, out_w], y)?;
    let mut parents = vec![input, kernel];
    parents.extend(bias);
    let has_bias = bias.is_some();
    let xv: Rc<Tensor> = xv;
    input.tape().push(
        "transposed_conv2d",
        out,
        &parents,
        Box::new(move |g| {
            let gx = geo.forward(g.data(), kv.data(), None);
            let gk = geo.backward_kernel(g.data(), xv.data());
            let mut grads = vec![
                Tensor::new(xv.shape(), gx).ok(),
                Tensor::new(kv.shape(), gk).ok(),
            ];
            if has_bias {
                let gb = geo.backward_bias(g.data(), oc, out_h * out_w);
                grads.push(Tensor::new(&[oc], gb).ok());
            }
            grads
        }),
    )
}
