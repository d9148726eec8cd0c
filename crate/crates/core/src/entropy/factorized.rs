//! Per-channel learned monotone CDF for the hyperlatents.
//!
//! Each channel maps a scalar through four affine stages `1 -> 3 -> 3 -> 3 -> 1`
//! whose matrices are made positive by a softplus; the first three stages add a
//! gated `tanh` nonlinearity with gate `tanh(factor)`, which keeps every stage
//! strictly increasing. The final output is the logit of the CDF.

use std::f64::consts::LN_2;

use rand::Rng;

use super::cdf::CdfTable;
use super::gaussian::TAIL_MASS;
use crate::error::{Error, Result};
use crate::par::*;
use crate::tensor::ops::{sigmoid_f, softplus_f};
use crate::tensor::{Tensor, Var};

/// Widths of the successive stages.
pub const PRIOR_DIMS: [usize; 5] = [1, 3, 3, 3, 1];
pub const PRIOR_STAGES: usize = 4;
/// Initial spread of the untrained density.
const INIT_SCALE: f64 = 10.0;
/// Largest alphabet half-width used when coding with the prior.
pub const MAX_HALF_ALPHABET: i32 = 1024;

/// Parameter tensor shapes for `channels` channels, in storage order:
/// four matrices `[C, out, in]`, four biases `[C, out]`, three factors `[C, out]`.
pub fn prior_param_shapes(channels: usize) -> Vec<(String, Vec<usize>)> {
    let mut v = Vec::new();
    for k in 0..PRIOR_STAGES {
        v.push((format!("matrix{k}"), vec![channels, PRIOR_DIMS[k + 1], PRIOR_DIMS[k]]));
    }
    for k in 0..PRIOR_STAGES {
        v.push((format!("bias{k}"), vec![channels, PRIOR_DIMS[k + 1]]));
    }
    for k in 0..PRIOR_STAGES - 1 {
        v.push((format!("factor{k}"), vec![channels, PRIOR_DIMS[k + 1]]));
    }
    v
}

/// Initial values for the tensors of [`prior_param_shapes`]: matrices such
/// that the untrained CDF is a logistic of scale about [`INIT_SCALE`], small
/// random biases, zero factors.
pub fn init_prior_params(channels: usize, rng: &mut impl Rng) -> Vec<Tensor> {
    let scale = INIT_SCALE.powf(1.0 / (PRIOR_STAGES + 1) as f64);
    prior_param_shapes(channels)
        .into_iter()
        .enumerate()
        .map(|(i, (_, shape))| {
            let n: usize = shape.iter().product();
            if i < PRIOR_STAGES {
                let v = (1.0 / scale / PRIOR_DIMS[i + 1] as f64).exp_m1().ln();
                Tensor::full(&shape, v)
            } else if i < 2 * PRIOR_STAGES {
                Tensor::new(&shape, (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).expect("shape")
            } else {
                Tensor::zeros(&shape)
            }
        })
        .collect()
}

/// Evaluated form of the prior: softplus already applied to the matrices and
/// `tanh` to the factors.
#[derive(Clone, Debug)]
pub struct FactorizedPrior {
    channels: usize,
    raw_matrices: [Vec<f64>; PRIOR_STAGES],
    matrices: [Vec<f64>; PRIOR_STAGES],
    biases: [Vec<f64>; PRIOR_STAGES],
    gates: [Vec<f64>; PRIOR_STAGES - 1],
}

/// Intermediate values of one CDF-logit evaluation.
#[derive(Clone, Copy, Default)]
struct Trace {
    /// Input of each stage (only the first `PRIOR_DIMS[k]` entries used).
    inputs: [[f64; 3]; PRIOR_STAGES],
    /// Affine output of each stage before the gated nonlinearity.
    pre: [[f64; 3]; PRIOR_STAGES],
    logit: f64,
}

/// Gradients of one channel's parameters (same layout as the evaluated form).
#[derive(Clone)]
struct ChannelGrads {
    matrices: [[f64; 9]; PRIOR_STAGES],
    biases: [[f64; 3]; PRIOR_STAGES],
    factors: [[f64; 3]; PRIOR_STAGES - 1],
}

impl Default for ChannelGrads {
    fn default() -> Self {
        Self {
            matrices: [[0.0; 9]; PRIOR_STAGES],
            biases: [[0.0; 3]; PRIOR_STAGES],
            factors: [[0.0; 3]; PRIOR_STAGES - 1],
        }
    }
}

impl FactorizedPrior {
    /// Builds the prior from tensors in [`prior_param_shapes`] order.
    pub fn new(params: &[&Tensor]) -> Result<Self> {
        let n = 3 * PRIOR_STAGES - 1;
        if params.len() != n {
            return Err(Error::dim(format!("factorized prior needs {n} tensors, got {}", params.len())));
        }
        let channels = params[0].shape().first().copied().unwrap_or(0);
        for ((_, shape), p) in prior_param_shapes(channels).iter().zip(params) {
            if p.shape() != shape.as_slice() {
                return Err(Error::dim(format!("prior tensor {:?}, expected {shape:?}", p.shape())));
            }
        }
        let raw = |i: usize| params[i].data().to_vec();
        let raw_matrices: [Vec<f64>; PRIOR_STAGES] = std::array::from_fn(raw);
        Ok(Self {
            channels,
            matrices: std::array::from_fn(|k| raw_matrices[k].iter().map(|&v| softplus_f(v)).collect()),
            biases: std::array::from_fn(|k| raw(PRIOR_STAGES + k)),
            gates: std::array::from_fn(|k| params[2 * PRIOR_STAGES + k].data().iter().map(|v| v.tanh()).collect()),
            raw_matrices,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn trace(&self, c: usize, u: f64) -> Trace {
        let mut t = Trace::default();
        let mut x = [u, 0.0, 0.0];
        for k in 0..PRIOR_STAGES {
            let (din, dout) = (PRIOR_DIMS[k], PRIOR_DIMS[k + 1]);
            t.inputs[k] = x;
            let m = &self.matrices[k][c * dout * din..(c + 1) * dout * din];
            let b = &self.biases[k][c * dout..(c + 1) * dout];
            let mut next = [0.0; 3];
            for o in 0..dout {
                let pre = b[o] + (0..din).map(|i| m[o * din + i] * x[i]).sum::<f64>();
                t.pre[k][o] = pre;
                next[o] = if k + 1 < PRIOR_STAGES {
                    pre + self.gates[k][c * dout + o] * pre.tanh()
                } else {
                    pre
                };
            }
            x = next;
        }
        t.logit = x[0];
        t
    }

    /// Logit of the CDF of channel `c` at `u`; strictly increasing in `u`.
    pub fn cdf_logit(&self, c: usize, u: f64) -> f64 {
        self.trace(c, u).logit
    }

    /// Accumulates parameter gradients for `d logit = g`; returns `d logit / d u * g`.
    fn backprop(&self, c: usize, t: &Trace, g: f64, grads: &mut ChannelGrads) -> f64 {
        let mut up = [g, 0.0, 0.0];
        for k in (0..PRIOR_STAGES).rev() {
            let (din, dout) = (PRIOR_DIMS[k], PRIOR_DIMS[k + 1]);
            let mut d_pre = [0.0; 3];
            for o in 0..dout {
                d_pre[o] = if k + 1 < PRIOR_STAGES {
                    let th = t.pre[k][o].tanh();
                    let gate = self.gates[k][c * dout + o];
                    grads.factors[k][o] += up[o] * th * (1.0 - gate * gate);
                    up[o] * (1.0 + gate * (1.0 - th * th))
                } else {
                    up[o]
                };
                grads.biases[k][o] += d_pre[o];
            }
            let m = &self.matrices[k][c * dout * din..(c + 1) * dout * din];
            let raw = &self.raw_matrices[k][c * dout * din..(c + 1) * dout * din];
            let mut down = [0.0; 3];
            for o in 0..dout {
                for i in 0..din {
                    grads.matrices[k][o * din + i] += d_pre[o] * t.inputs[k][i] * sigmoid_f(raw[o * din + i]);
                    down[i] += m[o * din + i] * d_pre[o];
                }
            }
            up = down;
        }
        up[0]
    }

    /// Bin mass of integer-centred `v`, computed on the far side of the median
    /// for precision. Returns the unfloored mass and the two logits.
    fn mass(&self, c: usize, v: f64) -> (f64, Trace, Trace) {
        let lo = self.trace(c, v - 0.5);
        let hi = self.trace(c, v + 0.5);
        let s = if lo.logit + hi.logit > 0.0 { -1.0 } else { 1.0 };
        let p = s * (sigmoid_f(s * hi.logit) - sigmoid_f(s * lo.logit));
        (p, lo, hi)
    }

    /// `CDF(v + 1/2) - CDF(v - 1/2)` for channel `c`, floored at [`TAIL_MASS`].
    pub fn likelihood(&self, c: usize, v: f64) -> f64 {
        self.mass(c, v).0.max(TAIL_MASS)
    }

    /// Point where the CDF of channel `c` reaches `p`.
    pub fn quantile(&self, c: usize, p: f64) -> f64 {
        let target = (p / (1.0 - p)).ln();
        let (mut lo, mut hi) = (-1.0, 1.0);
        while self.cdf_logit(c, lo) > target && lo > -1e12 {
            lo *= 2.0;
        }
        while self.cdf_logit(c, hi) < target && hi < 1e12 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf_logit(c, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Integer alphabet `[lo, hi]` of channel `c`, covering all but
    /// [`TAIL_MASS`] of the density and at most [`MAX_HALF_ALPHABET`] from 0.
    pub fn alphabet(&self, c: usize) -> (i32, i32) {
        let lim = MAX_HALF_ALPHABET as f64;
        let lo = self.quantile(c, TAIL_MASS / 2.0).floor().clamp(-lim, lim) as i32;
        let hi = self.quantile(c, 1.0 - TAIL_MASS / 2.0).ceil().clamp(-lim, lim) as i32;
        (lo, hi.max(lo))
    }

    /// One integer CDF table per channel.
    pub fn cdf_tables(&self) -> Vec<CdfTable> {
        (0..self.channels)
            .into_par_iter()
            .map(|c| {
                let (lo, hi) = self.alphabet(c);
                let probs: Vec<f64> = (lo..=hi).map(|v| self.mass(c, v as f64).0.max(0.0)).collect();
                CdfTable::from_probabilities(lo, &probs)
            })
            .collect()
    }
}

/// Parameter handles of one factorized prior, in [`prior_param_shapes`] order.
#[derive(Clone, Debug)]
pub struct PriorVars<'t> {
    pub params: Vec<Var<'t>>,
}

/// Element-wise information content `-log2 p(z)` in bits of a `[B, C, H, W]`
/// hyperlatent under the prior. Differentiable in `z` and every prior
/// parameter; zero gradient where the likelihood floor is active.
pub fn factorized_bits<'t>(z: Var<'t>, prior: &PriorVars<'t>) -> Result<Var<'t>> {
    let values: Vec<std::rc::Rc<Tensor>> = prior.params.iter().map(|p| p.value()).collect();
    let refs: Vec<&Tensor> = values.iter().map(|v| v.as_ref()).collect();
    let model = FactorizedPrior::new(&refs)?;
    let zv = z.value();
    let (b, c, h, w) = zv.dims4()?;
    if c != model.channels {
        return Err(Error::dim(format!("prior has {} channels, latent {c}", model.channels)));
    }
    let plane = h * w;
    let zd = zv.data();
    let model_ref = &model;
    // Per channel and element: bits, d bits / d p, and the two traces.
    let per_channel: Vec<Vec<(f64, f64, Trace, Trace)>> = (0..c)
        .into_par_iter()
        .map(|ch| {
            let mut out = Vec::with_capacity(b * plane);
            for bi in 0..b {
                for &v in &zd[(bi * c + ch) * plane..(bi * c + ch + 1) * plane] {
                    let (p, lo, hi) = model_ref.mass(ch, v);
                    if p <= TAIL_MASS {
                        out.push((-TAIL_MASS.log2(), 0.0, lo, hi));
                        continue;
                    }
                    out.push((-p.log2(), -1.0 / (p * LN_2), lo, hi));
                }
            }
            out
        })
        .collect();
    let mut bits = vec![0.0; zd.len()];
    for (ch, vals) in per_channel.iter().enumerate() {
        for bi in 0..b {
            for k in 0..plane {
                bits[(bi * c + ch) * plane + k] = vals[bi * plane + k].0;
            }
        }
    }
    let shapes: Vec<Vec<usize>> = refs.iter().map(|t| t.shape().to_vec()).collect();
    let mut parents = vec![z];
    parents.extend(prior.params.iter().copied());
    z.tape().push(
        "factorized_bits",
        Tensor::new(zv.shape(), bits)?,
        &parents,
        Box::new(move |g| {
            let gd = g.data();
            let results: Vec<(ChannelGrads, Vec<f64>)> = (0..c)
                .into_par_iter()
                .map(|ch| {
                    let mut grads = ChannelGrads::default();
                    let mut dz = vec![0.0; b * plane];
                    for bi in 0..b {
                        for k in 0..plane {
                            let (_, dbits, lo, hi) = &per_channel[ch][bi * plane + k];
                            let up = gd[(bi * c + ch) * plane + k] * dbits;
                            if up == 0.0 {
                                continue;
                            }
                            let s = if lo.logit + hi.logit > 0.0 { -1.0 } else { 1.0 };
                            let dsig = |x: f64| {
                                let q = sigmoid_f(s * x);
                                q * (1.0 - q)
                            };
                            // p = s (sig(s hi) - sig(s lo)) => dp/dhi = sig'(s hi), dp/dlo = -sig'(s lo).
                            let d_hi = model.backprop(ch, hi, up * dsig(hi.logit), &mut grads);
                            let d_lo = model.backprop(ch, lo, -up * dsig(lo.logit), &mut grads);
                            dz[bi * plane + k] = d_hi + d_lo;
                        }
                    }
                    (grads, dz)
                })
                .collect();
            let mut gz = vec![0.0; b * c * plane];
            let mut gp: Vec<Vec<f64>> = shapes.iter().map(|s| vec![0.0; s.iter().product()]).collect();
            for (ch, (grads, dz)) in results.iter().enumerate() {
                for bi in 0..b {
                    gz[(bi * c + ch) * plane..(bi * c + ch + 1) * plane].copy_from_slice(&dz[bi * plane..(bi + 1) * plane]);
                }
                for k in 0..PRIOR_STAGES {
                    let n = PRIOR_DIMS[k] * PRIOR_DIMS[k + 1];
                    gp[k][ch * n..(ch + 1) * n].copy_from_slice(&grads.matrices[k][..n]);
                    let d = PRIOR_DIMS[k + 1];
                    gp[PRIOR_STAGES + k][ch * d..(ch + 1) * d].copy_from_slice(&grads.biases[k][..d]);
                    if k + 1 < PRIOR_STAGES {
                        gp[2 * PRIOR_STAGES + k][ch * d..(ch + 1) * d].copy_from_slice(&grads.factors[k][..d]);
                    }
                }
            }
            let mut out = vec![Tensor::new(&[b, c, h, w], gz).ok()];
            out.extend(gp.into_iter().zip(&shapes).map(|(d, s)| Tensor::new(s, d).ok()));
            out
        }),
    )
}
