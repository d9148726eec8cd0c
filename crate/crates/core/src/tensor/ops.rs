//! Differentiable element-wise ops, reductions and layout ops.

use std::rc::Rc;

use super::{Tensor, Var};
use crate::error::{Error, Result};

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Element-wise unary op; `df(x, y)` is the derivative given input and output.
fn unary<'t>(
    x: Var<'t>,
    op: &str,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64, f64) -> f64 + 'static,
) -> Result<Var<'t>> {
    let xv = x.value();
    let out = xv.map(&f);
    let yv = Rc::new(out.clone());
    x.tape().push(
        op,
        out,
        &[x],
        Box::new(move |g| {
            let mut gx = g.clone();
            for ((gi, &xi), &yi) in gx.data_mut().iter_mut().zip(xv.data()).zip(yv.data()) {
                *gi *= df(xi, yi);
            }
            vec![Some(gx)]
        }),
    )
}

pub fn add<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let (av, bv) = (a.value(), b.value());
    same_shape("add", &av, &bv)?;
    let out = Tensor::new(
        av.shape(),
        av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect(),
    )?;
    a.tape()
        .push("add", out, &[a, b], Box::new(|g| vec![Some(g.clone()), Some(g.clone())]))
}

pub fn sub<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let (av, bv) = (a.value(), b.value());
    same_shape("sub", &av, &bv)?;
    let out = Tensor::new(
        av.shape(),
        av.data().iter().zip(bv.data()).map(|(x, y)| x - y).collect(),
    )?;
    a.tape().push(
        "sub",
        out,
        &[a, b],
        Box::new(|g| vec![Some(g.clone()), Some(g.map(|v| -v))]),
    )
}

pub fn mul<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let (av, bv) = (a.value(), b.value());
    same_shape("mul", &av, &bv)?;
    let out = Tensor::new(
        av.shape(),
        av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect(),
    )?;
    a.tape().push(
        "mul",
        out,
        &[a, b],
        Box::new(move |g| {
            let ga = Tensor::from_fn(g.shape(), |i| g.data()[i] * bv.data()[i]);
            let gb = Tensor::from_fn(g.shape(), |i| g.data()[i] * av.data()[i]);
            vec![Some(ga), Some(gb)]
        }),
    )
}

pub fn div<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let (av, bv) = (a.value(), b.value());
    same_shape("div", &av, &bv)?;
    let out = Tensor::new(
        av.shape(),
        av.data().iter().zip(bv.data()).map(|(x, y)| x / y).collect(),
    )?;
    a.tape().push(
        "div",
        out,
        &[a, b],
        Box::new(move |g| {
            let ga = Tensor::from_fn(g.shape(), |i| g.data()[i] / bv.data()[i]);
            let gb = Tensor::from_fn(g.shape(), |i| {
                let d = bv.data()[i];
                -g.data()[i] * av.data()[i] / (d * d)
            });
            vec![Some(ga), Some(gb)]
        }),
    )
}

pub fn square(x: Var<'_>) -> Result<Var<'_>> {
    unary(x, "square", |v| v * v, |x, _| 2.0 * x)
}

pub fn add_scalar(x: Var<'_>, s: f64) -> Result<Var<'_>> {
    unary(x, "add_scalar", move |v| v + s, |_, _| 1.0)
}

pub fn mul_scalar(x: Var<'_>, s: f64) -> Result<Var<'_>> {
    unary(x, "mul_scalar", move |v| v * s, move |_, _| s)
}

pub fn abs(x: Var<'_>) -> Result<Var<'_>> {
    unary(x, "abs", f64::abs, |x, _| {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    })
}

pub fn relu(x: Var<'_>) -> Result<Var<'_>> {
    unary(x, "relu", |v| v.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
}

pub fn sigmoid_f(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn softplus_f(v: f64) -> f64 {
    if v > 30.0 {
        v
    } else {
        v.exp().ln_1p()
    }
}

pub fn sigmoid(x: Var<'_>) -> Result<Var<'_>> {
    unary(x, "sigmoid", sigmoid_f, |_, y| y * (1.0 - y))
}

pub fn softplus(x: Var<'_>) -> Result<Var<'_>> {
    unary(x, "softplus", softplus_f, |x, _| sigmoid_f(x))
}

pub fn exp(x: Var<'_>) -> Result<Var<'_>> {
    unary(x, "exp", f64::exp, |_, y| y)
}

/// `max(x, floor)`; the gradient is zero where the floor is active.
pub fn lower_bound(x: Var<'_>, floor: f64) -> Result<Var<'_>> {
    unary(x, "lower_bound", move |v| v.max(floor), move |x, _| {
        if x >= floor {
            1.0
        } else {
            0.0
        }
    })
}

/// `x^p` for nonnegative `x`; the derivative at zero is taken as zero.
pub fn pow_scalar(x: Var<'_>, p: f64) -> Result<Var<'_>> {
    if x.value().data().iter().any(|&v| v < 0.0) {
        return Err(Error::numeric("pow_scalar on a negative base"));
    }
    unary(x, "pow", move |v| v.powf(p), move |x, y| {
        if x > 0.0 {
            p * y / x
        } else {
            0.0
        }
    })
}

pub fn sum(x: Var<'_>) -> Result<Var<'_>> {
    let xv = x.value();
    let shape = xv.shape().to_vec();
    x.tape().push(
        "sum",
        Tensor::scalar(xv.sum()),
        &[x],
        Box::new(move |g| vec![Some(Tensor::full(&shape, g.data()[0]))]),
    )
}

pub fn mean(x: Var<'_>) -> Result<Var<'_>> {
    let n = x.value().len();
    if n == 0 {
        return Err(Error::dim("mean of an empty tensor"));
    }
    mul_scalar(sum(x)?, 1.0 / n as f64)
}

/// Sum of scalar vars.
pub fn add_all<'t>(terms: &[Var<'t>]) -> Result<Var<'t>> {
    let mut it = terms.iter();
    let first = *it.next().ok_or_else(|| Error::dim("add_all of nothing"))?;
    it.try_fold(first, |acc, &t| add(acc, t))
}

/// `[B,C,H,W] -> [B,C,1,1]` spatial mean.
pub fn mean_spatial(x: Var<'_>) -> Result<Var<'_>> {
    let xv = x.value();
    let (b, c, h, w) = xv.dims4()?;
    let plane = h * w;
    let out = Tensor::new(
        &[b, c, 1, 1],
        xv.data()
            .chunks(plane)
            .map(|p| p.iter().sum::<f64>() / plane as f64)
            .collect(),
    )?;
    x.tape().push(
        "mean_spatial",
        out,
        &[x],
        Box::new(move |g| {
            let mut gx = Tensor::zeros(&[b, c, h, w]);
            for (chunk, &gv) in gx.data_mut().chunks_mut(plane).zip(g.data()) {
                chunk.fill(gv / plane as f64);
            }
            vec![Some(gx)]
        }),
    )
}

/// `[B,C,H,W] -> [B,C,1,1]` spatial max; the gradient goes to the first argmax.
pub fn max_spatial(x: Var<'_>) -> Result<Var<'_>> {
    let xv = x.value();
    let (b, c, h, w) = xv.dims4()?;
    let plane = h * w;
    let mut arg = Vec::with_capacity(b * c);
    let mut vals = Vec::with_capacity(b * c);
    for (pi, p) in xv.data().chunks(plane).enumerate() {
        let (mut bi, mut bv) = (0, f64::NEG_INFINITY);
        for (i, &v) in p.iter().enumerate() {
            if v > bv {
                bi = i;
                bv = v;
            }
        }
        arg.push(pi * plane + bi);
        vals.push(bv);
    }
    x.tape().push(
        "max_spatial",
        Tensor::new(&[b, c, 1, 1], vals)?,
        &[x],
        Box::new(move |g| {
            let mut gx = Tensor::zeros(&[b, c, h, w]);
            for (&a, &gv) in arg.iter().zip(g.data()) {
                gx.data_mut()[a] = gv;
            }
            vec![Some(gx)]
        }),
    )
}

/// `[B,C,H,W] -> [B,1,H,W]` mean over channels.
pub fn mean_channels(x: Var<'_>) -> Result<Var<'_>> {
    let xv = x.value();
    let (b, c, h, w) = xv.dims4()?;
    let plane = h * w;
    let mut out = vec![0.0; b * plane];
    for bi in 0..b {
        let dst = &mut out[bi * plane..(bi + 1) * plane];
        for ci in 0..c {
            let src = &xv.data()[(bi * c + ci) * plane..(bi * c + ci + 1) * plane];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        for d in dst.iter_mut() {
            *d /= c as f64;
        }
    }
    x.tape().push(
        "mean_channels",
        Tensor::new(&[b, 1, h, w], out)?,
        &[x],
        Box::new(move |g| {
            let mut gx = Tensor::zeros(&[b, c, h, w]);
            for bi in 0..b {
                let src = &g.data()[bi * plane..(bi + 1) * plane];
                for ci in 0..c {
                    let dst = &mut gx.data_mut()[(bi * c + ci) * plane..(bi * c + ci + 1) * plane];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = s / c as f64;
                    }
                }
            }
            vec![Some(gx)]
        }),
    )
}

/// `[B,C,H,W] -> [B,1,H,W]` max over channels; gradient to the first argmax.
pub fn max_channels(x: Var<'_>) -> Result<Var<'_>> {
    let xv = x.value();
    let (b, c, h, w) = xv.dims4()?;
    let plane = h * w;
    let mut out = vec![f64::NEG_INFINITY; b * plane];
    let mut arg = vec![0usize; b * plane];
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * plane;
            for p in 0..plane {
                let v = xv.data()[base + p];
                if v > out[bi * plane + p] {
                    out[bi * plane + p] = v;
                    arg[bi * plane + p] = base + p;
                }
            }
        }
    }
    x.tape().push(
        "max_channels",
        Tensor::new(&[b, 1, h, w], out)?,
        &[x],
        Box::new(move |g| {
            let mut gx = Tensor::zeros(&[b, c, h, w]);
            for (&a, &gv) in arg.iter().zip(g.data()) {
                gx.data_mut()[a] += gv;
            }
            vec![Some(gx)]
        }),
    )
}

/// Scales each channel plane of `x [B,C,H,W]` by `s [B,C,1,1]`.
pub fn scale_channels<'t>(x: Var<'t>, s: Var<'t>) -> Result<Var<'t>> {
    let (xv, sv) = (x.value(), s.value());
    let (b, c, h, w) = xv.dims4()?;
    if sv.shape() != [b, c, 1, 1] {
        return Err(Error::dim(format!(
            "scale_channels: scale {:?} for input {:?}",
            sv.shape(),
            xv.shape()
        )));
    }
    let plane = h * w;
    let mut out = xv.as_ref().clone();
    for (chunk, &f) in out.data_mut().chunks_mut(plane).zip(sv.data()) {
        chunk.iter_mut().for_each(|v| *v *= f);
    }
    x.tape().push(
        "scale_channels",
        out,
        &[x, s],
        Box::new(move |g| {
            let mut gx = g.clone();
            let mut gs = Tensor::zeros(&[b, c, 1, 1]);
            for (i, ((gc, xc), &f)) in gx
                .data_mut()
                .chunks_mut(plane)
                .zip(xv.data().chunks(plane))
                .zip(sv.data())
                .enumerate()
            {
                let mut acc = 0.0;
                for (gi, xi) in gc.iter_mut().zip(xc) {
                    acc += *gi * xi;
                    *gi *= f;
                }
                gs.data_mut()[i] = acc;
            }
            vec![Some(gx), Some(gs)]
        }),
    )
}

/// Scales every channel of `x [B,C,H,W]` pixel-wise by `m [B,1,H,W]`.
pub fn scale_pixels<'t>(x: Var<'t>, m: Var<'t>) -> Result<Var<'t>> {
    let (xv, mv) = (x.value(), m.value());
    let (b, c, h, w) = xv.dims4()?;
    if mv.shape() != [b, 1, h, w] {
        return Err(Error::dim(format!(
            "scale_pixels: map {:?} for input {:?}",
            mv.shape(),
            xv.shape()
        )));
    }
    let plane = h * w;
    let mut out = xv.as_ref().clone();
    for bi in 0..b {
        let mp = &mv.data()[bi * plane..(bi + 1) * plane];
        for ci in 0..c {
            let o = &mut out.data_mut()[(bi * c + ci) * plane..(bi * c + ci + 1) * plane];
            o.iter_mut().zip(mp).for_each(|(v, f)| *v *= f);
        }
    }
    x.tape().push(
        "scale_pixels",
        out,
        &[x, m],
        Box::new(move |g| {
            let mut gx = g.clone();
            let mut gm = Tensor::zeros(&[b, 1, h, w]);
            for bi in 0..b {
                let mp = &mv.data()[bi * plane..(bi + 1) * plane];
                for ci in 0..c {
                    let r = (bi * c + ci) * plane..(bi * c + ci + 1) * plane;
                    let xs = &xv.data()[r.clone()];
                    let gs = &mut gx.data_mut()[r];
                    let gmp = &mut gm.data_mut()[bi * plane..(bi + 1) * plane];
                    for p in 0..plane {
                        gmp[p] += gs[p] * xs[p];
                        gs[p] *= mp[p];
                    }
                }
            }
            vec![Some(gx), Some(gm)]
        }),
    )
}

pub fn concat_channels<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let first = *parts.first().ok_or_else(|| Error::dim("concat of nothing"))?;
    let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
    let refs: Vec<&Tensor> = values.iter().map(|v| v.as_ref()).collect();
    let out = Tensor::concat_channels(&refs)?;
    let sizes: Vec<usize> = values.iter().map(|v| v.shape()[1]).collect();
    first.tape().push(
        "concat_channels",
        out,
        parts,
        Box::new(move |g| {
            let mut start = 0;
            sizes
                .iter()
                .map(|&n| {
                    let part = g.slice_channels(start, n).ok();
                    start += n;
                    part
                })
                .collect()
        }),
    )
}

pub fn slice_channels(x: Var<'_>, start: usize, len: usize) -> Result<Var<'_>> {
    let xv = x.value();
    let out = xv.slice_channels(start, len)?;
    let (b, c, h, w) = xv.dims4()?;
    x.tape().push(
        "slice_channels",
        out,
        &[x],
        Box::new(move |g| {
            let plane = h * w;
            let mut gx = Tensor::zeros(&[b, c, h, w]);
            for bi in 0..b {
                let dst = (bi * c + start) * plane;
                let src = bi * len * plane;
                gx.data_mut()[dst..dst + len * plane]
                    .copy_from_slice(&g.data()[src..src + len * plane]);
            }
            vec![Some(gx)]
        }),
    )
}

/// Keeps the top-left `h x w` window of each plane.
pub fn crop(x: Var<'_>, h: usize, w: usize) -> Result<Var<'_>> {
    let xv = x.value();
    let (b, c, ih, iw) = xv.dims4()?;
    if h > ih || w > iw {
        return Err(Error::dim(format!("crop {h}x{w} larger than {ih}x{iw}")));
    }
    if (h, w) == (ih, iw) {
        return Ok(x);
    }
    let mut out = Vec::with_capacity(b * c * h * w);
    for p in xv.data().chunks(ih * iw) {
        for r in 0..h {
            out.extend_from_slice(&p[r * iw..r * iw + w]);
        }
    }
    x.tape().push(
        "crop",
        Tensor::new(&[b, c, h, w], out)?,
        &[x],
        Box::new(move |g| {
            let mut gx = Tensor::zeros(&[b, c, ih, iw]);
            for (dst, src) in gx.data_mut().chunks_mut(ih * iw).zip(g.data().chunks(h * w)) {
                for r in 0..h {
                    dst[r * iw..r * iw + w].copy_from_slice(&src[r * w..(r + 1) * w]);
                }
            }
            vec![Some(gx)]
        }),
    )
}

/// 2x2 average pooling with stride 2; odd trailing rows/columns are padded
/// by repeating the last one.
pub fn avg_pool2(x: Var<'_>) -> Result<Var<'_>> {
    let xv = x.value();
    let (b, c, h, w) = xv.dims4()?;
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let src = move |r: usize, col: usize| (r.min(h - 1), col.min(w - 1));
    let mut out = vec![0.0; b * c * oh * ow];
    for (o, p) in out.chunks_mut(oh * ow).zip(xv.data().chunks(h * w)) {
        for r in 0..oh {
            for q in 0..ow {
                let mut acc = 0.0;
                for (dr, dq) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let (rr, cc) = src(2 * r + dr, 2 * q + dq);
                    acc += p[rr * w + cc];
                }
                o[r * ow + q] = 0.25 * acc;
            }
        }
    }
    x.tape().push(
        "avg_pool2",
        Tensor::new(&[b, c, oh, ow], out)?,
        &[x],
        Box::new(move |g| {
            let mut gx = Tensor::zeros(&[b, c, h, w]);
            for (gp, gop) in gx.data_mut().chunks_mut(h * w).zip(g.data().chunks(oh * ow)) {
                for r in 0..oh {
                    for q in 0..ow {
                        let gv = 0.25 * gop[r * ow + q];
                        for (dr, dq) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            let (rr, cc) = src(2 * r + dr, 2 * q + dq);
                            gp[rr * w + cc] += gv;
                        }
                    }
                }
            }
            vec![Some(gx)]
        }),
    )
}

fn filter_rows(data: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let oh = h + 1 - k.len();
    let mut out = vec![0.0; oh * w];
    for r in 0..oh {
        let dst = &mut out[r * w..(r + 1) * w];
        for (t, &kv) in k.iter().enumerate() {
            let src = &data[(r + t) * w..(r + t + 1) * w];
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += kv * s);
        }
    }
    out
}

fn filter_rows_adjoint(g: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let oh = h + 1 - k.len();
    let mut out = vec![0.0; h * w];
    for r in 0..oh {
        let src = &g[r * w..(r + 1) * w];
        for (t, &kv) in k.iter().enumerate() {
            let dst = &mut out[(r + t) * w..(r + t + 1) * w];
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += kv * s);
        }
    }
    out
}

fn filter_cols(data: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let ow = w + 1 - k.len();
    let mut out = vec![0.0; h * ow];
    for r in 0..h {
        let src = &data[r * w..(r + 1) * w];
        let dst = &mut out[r * ow..(r + 1) * ow];
        for (q, d) in dst.iter_mut().enumerate() {
            *d = k.iter().zip(&src[q..q + k.len()]).map(|(a, b)| a * b).sum();
        }
    }
    out
}

fn filter_cols_adjoint(g: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let ow = w + 1 - k.len();
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        let src = &g[r * ow..(r + 1) * ow];
        let dst = &mut out[r * w..(r + 1) * w];
        for (q, &gv) in src.iter().enumerate() {
            for (t, &kv) in k.iter().enumerate() {
                dst[q + t] += kv * gv;
            }
        }
    }
    out
}

/// Separable "valid" filtering of every plane with the 1-d kernel `k`
/// applied along both axes.
pub fn separable_filter_valid<'t>(x: Var<'t>, k: &[f64]) -> Result<Var<'t>> {
    let xv = x.value();
    let (b, c, h, w) = xv.dims4()?;
    let n = k.len();
    if n == 0 || h < n || w < n {
        return Err(Error::dim(format!(
            "filter of size {n} does not fit a {h}x{w} plane"
        )));
    }
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let k = k.to_vec();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    for p in xv.data().chunks(h * w) {
        let rows = filter_rows(p, h, w, &k);
        out.extend(filter_cols(&rows, oh, w, &k));
    }
    x.tape().push(
        "separable_filter",
        Tensor::new(&[b, c, oh, ow], out)?,
        &[x],
        Box::new(move |g| {
            let mut gx = Vec::with_capacity(b * c * h * w);
            for gp in g.data().chunks(oh * ow) {
                let cols = filter_cols_adjoint(gp, oh, w, &k);
                gx.extend(filter_rows_adjoint(&cols, h, w, &k));
            }
            vec![Tensor::new(&[b, c, h, w], gx).ok()]
        }),
    )
}

/// Mixes the channels of `x [B,3,H,W]` pixel-wise with a fixed 3x3 matrix.
pub fn mix_channels<'t>(x: Var<'t>, m: [[f64; 3]; 3]) -> Result<Var<'t>> {
    let xv = x.value();
    let (b, c, h, w) = xv.dims4()?;
    if c != 3 {
        return Err(Error::dim(format!("mix_channels expects 3 channels, got {c}")));
    }
    let plane = h * w;
    let apply = move |src: &[f64], m: &[[f64; 3]; 3]| {
        let mut out = vec![0.0; src.len()];
        for bi in 0..b {
            let base = bi * 3 * plane;
            for p in 0..plane {
                let v = [src[base + p], src[base + plane + p], src[base + 2 * plane + p]];
                for (o, row) in m.iter().enumerate() {
                    out[base + o * plane + p] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
                }
            }
        }
        out
    };
    let out = apply(xv.data(), &m);
    let mt = [
        [m[0][0], m[1][0], m[2][0]],
        [m[0][1], m[1][1], m[2][1]],
        [m[0][2], m[1][2], m[2][2]],
    ];
    x.tape().push(
        "mix_channels",
        Tensor::new(&[b, 3, h, w], out)?,
        &[x],
        Box::new(move |g| vec![Tensor::new(g.shape(), apply(g.data(), &mt)).ok()]),
    )
}

/// Adds a constant tensor (e.g. quantization noise).
pub fn add_const<'t>(x: Var<'t>, c: &Tensor) -> Result<Var<'t>> {
    let k = x.tape().constant(c.clone());
    add(x, k)
}
