//! AdamW with decoupled weight decay.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{GradientMap, ParameterSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

impl AdamWConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0)
            || self.eps <= 0.0
            || self.weight_decay < 0.0
        {
            return Err(Error::Config(format!("invalid AdamW hyperparameters: {self:?}")));
        }
        Ok(())
    }
}

/// Optimizer state: first/second moments per parameter plus the step count.
pub struct AdamWState<F: Scalar> {
    pub cfg: AdamWConfig,
    t: u64,
    m: BTreeMap<String, Tensor<F>>,
    v: BTreeMap<String, Tensor<F>>,
}

impl<F: Scalar> AdamWState<F> {
    pub fn new(cfg: AdamWConfig) -> Self {
        Self {
            cfg,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn moments(&self, name: &str) -> Option<(&Tensor<F>, &Tensor<F>)> {
        Some((self.m.get(name)?, self.v.get(name)?))
    }

    /// One decoupled-weight-decay update with bias correction. Decay is
    /// applied directly to the parameters (scaled by the learning rate),
    /// independent of the adaptive gradient term.
    pub fn step(&mut self, params: &mut ParameterSet<F>, grads: &GradientMap<F>) -> Result<()> {
        for (name, g) in grads.iter() {
            if !g.is_all_finite() {
                return Err(Error::NonFiniteGradient { name: name.clone() });
            }
        }
        self.t += 1;
        let lr = F::from_f64(self.cfg.lr);
        let b1 = F::from_f64(self.cfg.beta1);
        let b2 = F::from_f64(self.cfg.beta2);
        let eps = F::from_f64(self.cfg.eps);
        let one = F::one();
        let bc1 = F::from_f64(1.0 - self.cfg.beta1.powi(self.t as i32));
        let bc2 = F::from_f64(1.0 - self.cfg.beta2.powi(self.t as i32));
        let decay = F::from_f64(self.cfg.lr * self.cfg.weight_decay);

        for (name, g) in grads.iter() {
            let p = params
                .get_mut(name)
                .ok_or_else(|| Error::Config(format!("gradient for unknown parameter `{name}`")))?;
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let pd = p.tensor.data_mut();
            let gd = g.data();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let gi = gd[i];
                md[i] = b1 * md[i] + (one - b1) * gi;
                vd[i] = b2 * vd[i] + (one - b2) * gi * gi;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] = pd[i] - decay * pd[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
