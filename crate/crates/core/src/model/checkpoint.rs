//! `CLCKPT01` checkpoint container.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! magic "CLCKPT01"
//! config        7 x u32  (lum, chroma, lum_hyper, chroma_hyper, kernel, hyper_kernel_first, hyper_kernel)
//! loss weights  3 x f64, lambda id u16
//! scale table   u32 count, count x f64
//! parameters    u32 count, then per tensor:
//!               u16 name length, name (UTF-8), u8 rank, rank x u32 dims, values as f32
//! optimizer     u8 flag; if 1: u64 step, f64 lr, beta1, beta2, epsilon,
//!               then first moments and second moments, per parameter as f32
//! ```

use std::path::Path;

use super::config::ModelConfig;
use super::loss::LossWeights;
use super::params::{init_params, ParamStore};
use super::Model;
use crate::error::{Error, Result};
use crate::tensor::{AdamState, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CLCKPT01";

/// A model plus optional optimizer state for resuming training.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub adam: Option<AdamState>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, t: &Tensor) {
        for &v in t.data() {
            self.0.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("checkpoint is truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn f32s(&mut self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::format("tensor too large"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
            .collect();
        Tensor::new(shape, data)
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode(&self.model, self.adam.as_ref())
    }

    /// Parses and validates a checkpoint: the parameter names and shapes must
    /// be exactly those of the stored configuration.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).map_err(|_| Error::format("not a checkpoint (too short)"))? != CHECKPOINT_MAGIC {
            return Err(Error::format("not a checkpoint (bad magic)"));
        }
        let mut dims = [0usize; 7];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let config = ModelConfig {
            lum_channels: dims[0],
            chroma_channels: dims[1],
            lum_hyper_channels: dims[2],
            chroma_hyper_channels: dims[3],
            kernel: dims[4],
            hyper_kernel_first: dims[5],
            hyper_kernel: dims[6],
        };
        config.validate().map_err(|e| Error::format(format!("checkpoint config: {e}")))?;
        let weights = LossWeights::new(r.f64()?, r.f64()?, r.f64()?)
            .map_err(|e| Error::format(format!("checkpoint loss weights: {e}")))?;
        let _lambda_id = r.u16()?;
        let n_scales = r.u32()? as usize;
        if n_scales == 0 || n_scales > 4096 {
            return Err(Error::format(format!("bad scale table length {n_scales}")));
        }
        let scale_table = (0..n_scales).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        crate::entropy::gaussian_cdf_tables(&scale_table)?;

        let layout = init_params(&config, 0)?;
        let count = r.u32()? as usize;
        if count != layout.len() {
            return Err(Error::format(format!("checkpoint has {count} tensors, expected {}", layout.len())));
        }
        let mut params = ParamStore::new();
        for (expected_name, expected) in layout.iter() {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| Error::format("parameter name is not UTF-8"))?;
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if name != expected_name || shape != expected.shape() {
                return Err(Error::format(format!(
                    "unexpected tensor {name} {shape:?} (expected {expected_name} {:?})",
                    expected.shape()
                )));
            }
            let t = r.f32s(&shape)?;
            if !t.is_finite() {
                return Err(Error::format(format!("parameter {name} holds non-finite values")));
            }
            params.insert(name, t)?;
        }
        let adam = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let (lr, beta1, beta2, epsilon) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
                let m = params.values().iter().map(|t| r.f32s(t.shape())).collect::<Result<Vec<_>>>()?;
                let v = params.values().iter().map(|t| r.f32s(t.shape())).collect::<Result<Vec<_>>>()?;
                Some(AdamState { step, m, v, lr, beta1, beta2, epsilon })
            }
            f => return Err(Error::format(format!("bad optimizer flag {f}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::format("trailing bytes after checkpoint"));
        }
        Ok(Self {
            model: Model { config, params, scale_table, weights },
            adam,
        })
    }
}

fn encode(m: &Model, adam: Option<&AdamState>) -> Vec<u8> {
    let mut w = Writer(CHECKPOINT_MAGIC.to_vec());
    let c = &m.config;
    for v in [
        c.lum_channels,
        c.chroma_channels,
        c.lum_hyper_channels,
        c.chroma_hyper_channels,
        c.kernel,
        c.hyper_kernel_first,
        c.hyper_kernel,
    ] {
        w.u32(v as u32);
    }
    w.f64(m.weights.lambda1);
    w.f64(m.weights.lambda2);
    w.f64(m.weights.lambda3);
    w.u16(m.weights.id());
    w.u32(m.scale_table.len() as u32);
    for &s in &m.scale_table {
        w.f64(s);
    }
    w.u32(m.params.len() as u32);
    for (name, t) in m.params.iter() {
        w.u16(name.len() as u16);
        w.0.extend_from_slice(name.as_bytes());
        w.u8(t.shape().len() as u8);
        for &d in t.shape() {
            w.u32(d as u32);
        }
        w.f32s(t);
    }
    match adam {
        None => w.u8(0),
        Some(a) => {
            w.u8(1);
            w.u64(a.step);
            for v in [a.lr, a.beta1, a.beta2, a.epsilon] {
                w.f64(v);
            }
            a.m.iter().for_each(|t| w.f32s(t));
            a.v.iter().for_each(|t| w.f32s(t));
        }
    }
    w.0
}

/// Writes atomically (temporary file, then rename).
pub fn save_checkpoint(path: impl AsRef<Path>, model: &Model, adam: Option<&AdamState>) -> Result<()> {
    crate::write_atomic(path, &encode(model, adam))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::usage(format!("checkpoint {} not found", path.display()))
        } else {
            Error::Io(e)
        }
    })?;
    Checkpoint::from_bytes(&bytes)
}
