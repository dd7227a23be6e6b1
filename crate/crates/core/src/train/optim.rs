use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::nn::ParamStore;

const EPS: f64 = 1e-8;

/// Adam with bias correction. Moments are keyed by parameter name so they
/// can be checkpointed alongside the weights.
#[derive(Clone, Debug)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    steps: u64,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64) -> Self {
        Self {
            beta1,
            beta2,
            steps: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Updates every parameter of `params` that has a gradient in `grads`.
    pub fn step(&mut self, params: &ParamStore, grads: &GradStore, lr: f64) -> Result<()> {
        self.steps += 1;
        let t = self.steps as i32;
        let correct1 = 1.0 - self.beta1.powi(t);
        let correct2 = 1.0 - self.beta2.powi(t);
        for (name, var) in params.iter() {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            // gradients carry their own graph; keeping it alive in the moments leaks every step
            let g = g.detach();
            let g = &g;
            let m = match self.first.get(name) {
                Some(m) => ((m * self.beta1)? + (g * (1.0 - self.beta1))?)?,
                None => (g * (1.0 - self.beta1))?,
            };
            let v = match self.second.get(name) {
                Some(v) => ((v * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?,
                None => (g.sqr()? * (1.0 - self.beta2))?,
            };
            if lr != 0.0 {
                let update = ((&m / correct1)? / ((&v / correct2)?.sqrt()? + EPS)?)?;
                var.set(&(var.as_tensor().detach() - (update * lr)?)?)?;
            }
            self.first.insert(name.to_string(), m);
            self.second.insert(name.to_string(), v);
        }
        Ok(())
    }

    pub fn state_tensors(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let first = self.first.iter().map(|(k, v)| (format!("{prefix}.m:{k}"), v.clone()));
        let second = self.second.iter().map(|(k, v)| (format!("{prefix}.v:{k}"), v.clone()));
        first.chain(second).collect()
    }

    pub fn restore(
        beta1: f64,
        beta2: f64,
        steps: u64,
        prefix: &str,
        tensors: &BTreeMap<String, Tensor>,
    ) -> Result<Self> {
        let mut opt = Self::new(beta1, beta2);
        opt.steps = steps;
        let m_prefix = format!("{prefix}.m:");
        let v_prefix = format!("{prefix}.v:");
        for (k, t) in tensors {
            if let Some(name) = k.strip_prefix(&m_prefix) {
                opt.first.insert(name.to_string(), t.clone());
            } else if let Some(name) = k.strip_prefix(&v_prefix) {
                opt.second.insert(name.to_string(), t.clone());
            }
        }
        if opt.first.len() != opt.second.len() {
            return Err(Error::Checkpoint(format!("incomplete {prefix} optimizer state")));
        }
        Ok(opt)
    }
}
