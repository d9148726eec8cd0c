//! Named parameter storage and initialization.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Branch, ModelConfig, MAIN_STAGES};
use crate::entropy::{init_prior_params, prior_param_shapes};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Attention-MLP reduction ratio.
pub const CBAM_REDUCTION: usize = 8;
/// Spatial-attention kernel size.
pub const CBAM_KERNEL: usize = 7;

/// Ordered collection of uniquely named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::usage(format!("duplicate parameter name {name}")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.position(name)
            .map(|i| &self.values[i])
            .ok_or_else(|| Error::usage(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        let i = self.position(name).ok_or_else(|| Error::usage(format!("missing parameter {name}")))?;
        Ok(&mut self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total scalar count.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Rounds every value to the nearest `f32`, the storage precision.
    pub fn round_to_f32(&mut self) {
        for t in &mut self.values {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Records every tensor on `tape`, as trainable leaves or as constants.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> BoundParams<'t, '_> {
        let vars = self.values.iter().map(|v| tape.leaf(v.clone(), trainable)).collect();
        BoundParams { store: self, vars }
    }

    /// Wraps already recorded handles (one per parameter, in store order).
    pub fn bind_vars<'t>(&self, vars: Vec<Var<'t>>) -> Result<BoundParams<'t, '_>> {
        if vars.len() != self.len() {
            return Err(Error::usage(format!("{} handles for {} parameters", vars.len(), self.len())));
        }
        Ok(BoundParams { store: self, vars })
    }
}

/// Parameters recorded on a tape, looked up by name.
#[derive(Clone, Debug)]
pub struct BoundParams<'t, 's> {
    store: &'s ParamStore,
    vars: Vec<Var<'t>>,
}

impl<'t> BoundParams<'t, '_> {
    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.store
            .position(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::usage(format!("missing parameter {name}")))
    }

    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }
}

/// Uniform values with variance `1 / fan_in`.
fn uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let a = (3.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-a..a)).collect()).expect("shape")
}

fn softplus_inverse(v: f64) -> f64 {
    v.exp_m1().ln()
}

struct Init<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Init<'_> {
    fn conv(&mut self, prefix: &str, cout: usize, cin: usize, k: usize) -> Result<()> {
        let w = uniform(&[cout, cin, k, k], cin * k * k, &mut self.rng);
        self.store.insert(format!("{prefix}.kernel"), w)?;
        self.store.insert(format!("{prefix}.bias"), Tensor::zeros(&[cout]))
    }

    /// Transposed conv kernel `[cin, cout, k, k]`; each output sees about
    /// `cin k^2 / stride^2` inputs.
    fn deconv(&mut self, prefix: &str, cin: usize, cout: usize, k: usize, stride: usize) -> Result<()> {
        let fan_in = (cin * k * k / (stride * stride)).max(1);
        let w = uniform(&[cin, cout, k, k], fan_in, &mut self.rng);
        self.store.insert(format!("{prefix}.kernel"), w)?;
        self.store.insert(format!("{prefix}.bias"), Tensor::zeros(&[cout]))
    }

    /// Divisive normalization with beta = 1, gamma = 0.1 on the diagonal
    /// and 1e-3 elsewhere (stored before the softplus reparameterization).
    fn gdn(&mut self, prefix: &str, c: usize) -> Result<()> {
        let beta = Tensor::full(&[c], softplus_inverse(1.0 - super::transforms::BETA_MIN));
        let (diag, off) = (softplus_inverse(0.1), softplus_inverse(1e-3));
        let gamma = Tensor::from_fn(&[c, c], |i| if i / c == i % c { diag } else { off });
        self.store.insert(format!("{prefix}.beta"), beta)?;
        self.store.insert(format!("{prefix}.gamma"), gamma)
    }

    fn cbam(&mut self, prefix: &str, c: usize) -> Result<()> {
        let hidden = (c / CBAM_REDUCTION).max(1);
        self.conv(&format!("{prefix}.fc1"), hidden, c, 1)?;
        self.conv(&format!("{prefix}.fc2"), c, hidden, 1)?;
        self.conv(&format!("{prefix}.spatial"), 1, 2, CBAM_KERNEL)
    }
}

/// Freshly initialized parameters for both branches.
///
/// Naming: `{lum|chroma}.{analysis|synthesis|hyper_analysis|hyper_synthesis|prior}.…`.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    let mut init = Init {
        store: &mut store,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let k = config.kernel;
    for branch in Branch::ALL {
        let (b, n, nh, planes) = (
            branch.name(),
            config.channels(branch),
            config.hyper_channels(branch),
            branch.planes(),
        );
        for i in 0..MAIN_STAGES {
            let cin = if i == 0 { planes } else { n };
            init.conv(&format!("{b}.analysis.conv{i}"), n, cin, k)?;
            init.gdn(&format!("{b}.analysis.gdn{i}"), n)?;
        }
        init.cbam(&format!("{b}.analysis.cbam"), n)?;
        for i in 0..MAIN_STAGES {
            let cout = if i + 1 == MAIN_STAGES { planes } else { n };
            init.deconv(&format!("{b}.synthesis.deconv{i}"), n, cout, k, 2)?;
            init.gdn(&format!("{b}.synthesis.igdn{i}"), cout)?;
            if i == 0 {
                init.cbam(&format!("{b}.synthesis.cbam"), n)?;
            }
        }
        init.conv(&format!("{b}.hyper_analysis.conv0"), nh, n, config.hyper_kernel_first)?;
        init.conv(&format!("{b}.hyper_analysis.conv1"), nh, nh, config.hyper_kernel)?;
        init.conv(&format!("{b}.hyper_analysis.conv2"), nh, nh, config.hyper_kernel)?;
        init.deconv(&format!("{b}.hyper_synthesis.deconv0"), nh, nh, config.hyper_kernel, 2)?;
        init.deconv(&format!("{b}.hyper_synthesis.deconv1"), nh, nh, config.hyper_kernel, 2)?;
        init.deconv(&format!("{b}.hyper_synthesis.deconv2"), nh, n, config.hyper_kernel_first, 1)?;
        let prior = init_prior_params(nh, &mut init.rng);
        for ((name, _), t) in prior_param_shapes(nh).into_iter().zip(prior) {
            init.store.insert(format!("{b}.prior.{name}"), t)?;
        }
    }
    store.round_to_f32();
    Ok(store)
}

/// Names of the prior tensors of a branch, in the order the entropy model expects.
pub fn prior_names(config: &ModelConfig, branch: Branch) -> Vec<String> {
    prior_param_shapes(config.hyper_channels(branch))
        .into_iter()
        .map(|(n, _)| format!("{}.prior.{n}", branch.name()))
        .collect()
}
