use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Central finite-difference check of reverse-mode gradients.
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Finite-difference step.
    pub h: f64,
    /// Check at most this many entries per input (all when `None`).
    pub max_entries: Option<usize>,
    /// Gradients smaller than this are compared in absolute terms.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            h: 1e-5,
            max_entries: None,
            floor: 1e-6,
            seed: 0,
        }
    }
}

impl GradCheck {
    /// Worst relative error `|analytic - numeric| / max(|analytic|, |numeric|, floor)`
    /// over the checked entries of every input.
    pub fn run<F>(&self, f: F, inputs: &[Tensor]) -> Result<f64>
    where
        F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
    {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&tape, &vars)?;
        let grads = tape.backward(out)?;
        let analytic: Vec<Tensor> = vars
            .iter()
            .zip(inputs)
            .map(|(&v, t)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect();

        let eval = |inputs: &[Tensor]| -> Result<f64> {
            let tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
            let out = f(&tape, &vars)?;
            if out.value().len() != 1 {
                return Err(Error::dim("grad_check: function must return a scalar"));
            }
            Ok(out.item())
        };

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut worst = 0.0f64;
        let mut work = inputs.to_vec();
        for (i, input) in inputs.iter().enumerate() {
            let n = input.len();
            let picks: Vec<usize> = match self.max_entries {
                Some(k) if k < n => sample(&mut rng, n, k).into_vec(),
                _ => (0..n).collect(),
            };
            for k in picks {
                let orig = input.data()[k];
                work[i].data_mut()[k] = orig + self.h;
                let up = eval(&work)?;
                work[i].data_mut()[k] = orig - self.h;
                let down = eval(&work)?;
                work[i].data_mut()[k] = orig;
                let numeric = (up - down) / (2.0 * self.h);
                let a = analytic[i].data()[k];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(self.floor);
                worst = worst.max(err);
            }
        }
        Ok(worst)
    }
}

/// [`GradCheck::run`] with default settings and step `h`.
pub fn grad_check<F>(f: F, inputs: &[Tensor], h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    GradCheck {
        h,
        ..GradCheck::default()
    }
    .run(f, inputs)
}
