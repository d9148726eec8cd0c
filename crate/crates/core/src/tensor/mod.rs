//! Minimal reverse-mode differentiable tensor engine.
//!
//! [`Tensor`] is a plain shaped buffer of `f64`. Differentiation happens on a
//! [`Tape`]: every op pushes its output value together with a closure that maps
//! the upstream gradient to gradients of its inputs. Activations use the
//! batch x channels x height x width layout throughout.
//!
//! All arithmetic is carried out in double precision. Model parameters are
//! kept representable in single precision (see [`crate::model::ParamStore`]),
//! which is also how they are persisted.

mod adam;
mod cbam;
mod conv;
mod gdn;
mod gradcheck;
pub mod ops;
mod tape;

pub use adam::{adam_step, AdamState};
pub use cbam::{cbam, CbamVars};
pub use conv::{conv2d, conv_output_len, same_padding, transposed_conv2d, Padding};
pub use gdn::gdn;
pub use gradcheck::{grad_check, GradCheck};
pub use tape::{Gradients, Tape, Var};

use crate::error::{Error, Result};

/// Shaped dense buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Interprets the shape as `[batch, channels, height, width]`.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape.as_slice() {
            &[b, c, h, w] => Ok((b, c, h, w)),
            s => Err(Error::dim(format!("expected a 4-d tensor, got shape {s:?}"))),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::dim(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Channel range `[start, start + len)` of a 4-d tensor.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Tensor> {
        let (b, c, h, w) = self.dims4()?;
        if start + len > c {
            return Err(Error::dim(format!(
                "channel slice {start}..{} out of {c}",
                start + len
            )));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(b * len * plane);
        for bi in 0..b {
            let base = (bi * c + start) * plane;
            data.extend_from_slice(&self.data[base..base + len * plane]);
        }
        Tensor::new(&[b, len, h, w], data)
    }

    /// Concatenates 4-d tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::dim("concat of zero tensors"))?;
        let (b, _, h, w) = first.dims4()?;
        let mut total = 0;
        for p in parts {
            let (pb, pc, ph, pw) = p.dims4()?;
            if (pb, ph, pw) != (b, h, w) {
                return Err(Error::dim(format!(
                    "concat mismatch {:?} vs {:?}",
                    first.shape, p.shape
                )));
            }
            total += pc;
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(b * total * plane);
        for bi in 0..b {
            for p in parts {
                let pc = p.shape[1];
                let base = bi * pc * plane;
                data.extend_from_slice(&p.data[base..base + pc * plane]);
            }
        }
        Tensor::new(&[b, total, h, w], data)
    }
}
