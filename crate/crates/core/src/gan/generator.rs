//! LSTM sequence-to-sequence generator: replaces the analytic forward
//! noising with a learned one-shot transformation of a window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ops, Var};
use crate::layers::{self, dense, lstm_cell};
use crate::params::{Bound, ParameterSet};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub window: usize,
    pub channels: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            window: 64,
            channels: 5,
            hidden: 48,
            layers: 1,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.channels == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(Error::Config("generator dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Output shape equals input shape, so the generated window is a valid
/// denoiser input.
#[derive(Clone, Debug)]
pub struct Generator<F: Scalar> {
    pub config: GeneratorConfig,
    pub params: ParameterSet<F>,
}

/// Alias matching the role after training completes.
pub type TrainedGenerator<F> = Generator<F>;

impl<F: Scalar> Generator<F> {
    pub fn init(config: GeneratorConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let mut ps = ParameterSet::new();
        for layer in 0..config.layers {
            let in_dim = if layer == 0 { config.channels } else { config.hidden };
            layers::init_lstm(&mut ps, &format!("lstm{layer}"), in_dim, config.hidden, rng)?;
        }
        layers::init_dense(&mut ps, "proj", config.channels, config.hidden, rng)?;
        Ok(Self { config, params: ps })
    }

    /// `x [B, w, D] -> [B, w, D]`.
    pub fn forward(&self, bound: &Bound<F>, x: &Var<F>) -> Result<Var<F>> {
        let shape = x.shape();
        if shape.len() != 3 || shape[1] != self.config.window || shape[2] != self.config.channels {
            return Err(Error::ShapeMismatch {
                context: "generator".into(),
                expected: format!("[B, {}, {}]", self.config.window, self.config.channels),
                got: format!("{shape:?}"),
            });
        }
        let b = shape[0];
        let h_dim = self.config.hidden;
        let w = self.config.window;

        let mut states: Vec<(Var<F>, Var<F>)> = (0..self.config.layers)
            .map(|_| {
                (
                    Var::constant(Tensor::zeros(&[b, h_dim])),
                    Var::constant(Tensor::zeros(&[b, h_dim])),
                )
            })
            .collect();

        let mut outputs = Vec::with_capacity(w);
        for t in 0..w {
            let mut inp = ops::reshape(&ops::narrow(x, 1, t, 1), vec![b, self.config.channels]);
            for (layer, state) in states.iter_mut().enumerate() {
                let (h, c) = lstm_cell(bound, &format!("lstm{layer}"), &inp, &state.0, &state.1);
                *state = (h.clone(), c);
                inp = h;
            }
            let y = dense(bound, "proj", &inp);
            outputs.push(ops::reshape(&y, vec![b, 1, self.config.channels]));
        }
        Ok(ops::concat(&outputs, 1))
    }

    /// Inference on a plain `[B, w, D]` tensor.
    pub fn predict(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let bound = self.params.bind(false);
        Ok(self.forward(&bound, &Var::constant(x.clone()))?.value().clone())
    }
}
