//! MLP discriminator: estimates the probability that a window is pure noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ops, Var};
use crate::layers::{self, dense};
use crate::params::{Bound, ParameterSet};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Logits are clamped to this magnitude before the sigmoid, keeping the
/// probability strictly inside (0, 1) for the log terms.
pub const LOGIT_BOUND: f64 = 16.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub window: usize,
    pub channels: usize,
    pub hidden: Vec<usize>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            window: 64,
            channels: 5,
            hidden: vec![96, 48],
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.channels == 0 || self.hidden.is_empty() {
            return Err(Error::Config("discriminator dimensions must be positive".into()));
        }
        if self.hidden.iter().any(|h| *h == 0) {
            return Err(Error::Config("discriminator hidden widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Discriminator<F: Scalar> {
    pub config: DiscriminatorConfig,
    pub params: ParameterSet<F>,
}

/// Alias matching the role after training completes.
pub type TrainedDiscriminator<F> = Discriminator<F>;

impl<F: Scalar> Discriminator<F> {
    pub fn init(config: DiscriminatorConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let mut ps = ParameterSet::new();
        let mut in_dim = config.window * config.channels;
        for (i, h) in config.hidden.iter().enumerate() {
            layers::init_dense(&mut ps, &format!("fc{i}"), *h, in_dim, rng)?;
            in_dim = *h;
        }
        layers::init_dense(&mut ps, "out", 1, in_dim, rng)?;
        Ok(Self { config, params: ps })
    }

    /// Raw logits: `x [B, w, D] -> [B, 1]`.
    pub fn forward_logit(&self, bound: &Bound<F>, x: &Var<F>) -> Result<Var<F>> {
        let shape = x.shape();
        if shape.len() != 3 || shape[1] != self.config.window || shape[2] != self.config.channels {
            return Err(Error::ShapeMismatch {
                context: "discriminator".into(),
                expected: format!("[B, {}, {}]", self.config.window, self.config.channels),
                got: format!("{shape:?}"),
            });
        }
        let b = shape[0];
        let mut h = ops::reshape(x, vec![b, self.config.window * self.config.channels]);
        for i in 0..self.config.hidden.len() {
            h = ops::relu(&dense(bound, &format!("fc{i}"), &h));
        }
        Ok(dense(bound, "out", &h))
    }

    /// Clamped-logit probability: `[B, 1]` strictly inside (0, 1).
    pub fn forward_prob(&self, bound: &Bound<F>, x: &Var<F>) -> Result<Var<F>> {
        let logit = self.forward_logit(bound, x)?;
        Ok(ops::sigmoid(&ops::clamp(
            &logit,
            F::from_f64(-LOGIT_BOUND),
            F::from_f64(LOGIT_BOUND),
        )))
    }

    /// Inference probabilities for a plain `[B, w, D]` tensor.
    pub fn predict_prob(&self, x: &Tensor<F>) -> Result<Vec<f64>> {
        let bound = self.params.bind(false);
        let probs = self.forward_prob(&bound, &Var::constant(x.clone()))?;
        Ok(probs.value().data().iter().map(|p| p.into_f64()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_strictly_inside_unit_interval() {
        let cfg = DiscriminatorConfig {
            window: 8,
            channels: 2,
            hidden: vec![16, 8],
        };
        let mut rng = RngStream::new(4);
        let d = Discriminator::<f64>::init(cfg, &mut rng).unwrap();
        // extreme inputs cannot push the clamped probability to 0 or 1
        let huge = Tensor::full(&[3, 8, 2], 1e6);
        for p in d.predict_prob(&huge).unwrap() {
            assert!(p > 0.0 && p < 1.0);
            assert!(p >= 1.0 / (1.0 + LOGIT_BOUND.exp()) - 1e-12);
        }
    }

    #[test]
    fn wrong_shape_rejected() {
        let mut rng = RngStream::new(4);
        let d = Discriminator::<f32>::init(DiscriminatorConfig::default(), &mut rng).unwrap();
        assert!(d.predict_prob(&Tensor::zeros(&[1, 64, 4])).is_err());
    }
}
