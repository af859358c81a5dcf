//! Denoiser training: per batch, draw a uniform step and Gaussian noise,
//! regress the injected noise with a per-element mean-squared error, and take
//! one AdamW step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::schedule::NoiseSchedule;
use super::unet::{unet_forward, DenoiserConfig, UNet};
use crate::data::windows::WindowSet;
use crate::error::{Error, Result};
use crate::graph::{backward, ops, Var};
use crate::optim::{AdamWConfig, AdamWState};
use crate::params::{GradientMap, ParameterSet};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserTrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    /// Global-norm gradient clip; on by default.
    pub grad_clip: Option<f64>,
    /// Early stop when the smoothed epoch loss has not improved by
    /// `min_rel_improvement` for this many epochs.
    pub patience: usize,
    pub min_rel_improvement: f64,
    /// Samples per parallel gradient chunk (fixed so results do not depend
    /// on the number of worker threads).
    pub chunk_size: usize,
    pub log_progress: bool,
}

impl Default for DenoiserTrainOptions {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            optimizer: AdamWConfig::with_lr(1e-3),
            grad_clip: Some(1.0),
            patience: 10,
            min_rel_improvement: 0.01,
            chunk_size: 8,
            log_progress: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

/// A denoiser plus everything needed to run it: architecture config and the
/// schedule it was trained against.
#[derive(Clone, Debug)]
pub struct TrainedDenoiser<F: Scalar> {
    pub config: DenoiserConfig,
    pub params: ParameterSet<F>,
    pub schedule: NoiseSchedule,
}

impl<F: Scalar> TrainedDenoiser<F> {
    /// Frozen predictor for inference or for gradient flow through the input
    /// path only. Each worker thread should create its own.
    pub fn predictor(&self) -> FrozenDenoiser<'_, F> {
        FrozenDenoiser {
            config: &self.config,
            bound: self.params.bind(false),
        }
    }

    /// Inference on a plain `[B, channels, window]` tensor.
    pub fn predict(&self, x: &Tensor<F>, n: usize) -> Result<Tensor<F>> {
        let p = self.predictor();
        let xv = Var::constant(x.clone());
        Ok(p.predict_var(&xv, n)?.value().clone())
    }
}

/// Parameter binding of a frozen denoiser.
pub struct FrozenDenoiser<'a, F: Scalar> {
    config: &'a DenoiserConfig,
    bound: crate::params::Bound<F>,
}

impl<F: Scalar> FrozenDenoiser<'_, F> {
    fn predict_var(&self, x: &Var<F>, n: usize) -> Result<Var<F>> {
        unet_forward(self.config, &self.bound, x, n)
    }
}

impl<F: Scalar> super::denoise::NoisePredictor<F> for FrozenDenoiser<'_, F> {
    fn predict(&self, x: &Var<F>, n: usize) -> Result<Var<F>> {
        self.predict_var(x, n)
    }
}

/// Per-element mean-squared noise-prediction loss over one epoch's batches,
/// with fixed-size gradient chunks evaluated in parallel and reduced in
/// index order (deterministic for a given seed, regardless of thread count).
pub fn train_denoiser<F: Scalar>(
    windows: &WindowSet<F>,
    config: &DenoiserConfig,
    schedule: &NoiseSchedule,
    opts: &DenoiserTrainOptions,
    seed: u64,
) -> Result<(TrainedDenoiser<F>, Vec<EpochLoss>)> {
    config.validate()?;
    opts.optimizer.validate()?;
    if windows.is_empty() {
        return Err(Error::Config("cannot train on an empty window set".into()));
    }
    if opts.batch_size == 0 || opts.batch_size > windows.len() {
        return Err(Error::Config(format!(
            "batch size {} must be in 1..={}",
            opts.batch_size,
            windows.len()
        )));
    }
    if windows.window_size() != config.window || windows.dims() != config.channels {
        return Err(Error::ShapeMismatch {
            context: "train_denoiser".into(),
            expected: format!("windows of [{}, {}]", config.window, config.channels),
            got: format!("[{}, {}]", windows.window_size(), windows.dims()),
        });
    }

    let base = RngStream::new(seed);
    let mut init_rng = base.substream("init");
    let mut batch_rng = base.substream("batch");
    let mut step_rng = base.substream("step");
    let mut noise_rng = base.substream("noise");

    let mut unet = UNet::init(config.clone(), &mut init_rng)?;
    let mut opt = AdamWState::new(opts.optimizer);

    // channels-first copies of the windows, shared read-only across chunks
    let wins_cf: Vec<Tensor<F>> = windows
        .iter()
        .map(|w| {
            w.transposed2()
                .reshaped(vec![1, config.channels, config.window])
                .expect("window shape")
        })
        .collect();

    let n_total = schedule.n_steps();
    let mut order: Vec<usize> = (0..wins_cf.len()).collect();
    let mut history = Vec::new();
    let mut best_smoothed = f64::INFINITY;
    let mut stale_epochs = 0usize;
    let mut recent: Vec<f64> = Vec::new();
    let mut iteration = 0usize;

    for epoch in 0..opts.epochs {
        batch_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0f64;
        let mut batches = 0usize;

        for batch_idx in order.chunks(opts.batch_size) {
            if batch_idx.len() < opts.batch_size {
                continue; // drop ragged tail batch
            }
            let n = 1 + step_rng.below(n_total);
            // fresh noise per window, drawn sequentially for determinism
            let eps: Vec<Tensor<F>> = batch_idx
                .iter()
                .map(|_| noise_rng.normal_tensor(&[1, config.channels, config.window]))
                .collect();

            let chunks: Vec<(Vec<usize>, Vec<Tensor<F>>)> = batch_idx
                .chunks(opts.chunk_size.max(1))
                .enumerate()
                .map(|(ci, c)| {
                    let lo = ci * opts.chunk_size.max(1);
                    (c.to_vec(), eps[lo..lo + c.len()].to_vec())
                })
                .collect();

            let results: Vec<Result<(f64, GradientMap<F>)>> = chunks
                .par_iter()
                .map(|(idxs, eps_chunk)| {
                    let bound = unet.params.bind(true);
                    let mut loss_sum: Option<Var<F>> = None;
                    for (wi, e) in idxs.iter().zip(eps_chunk.iter()) {
                        let x_t = super::schedule::forward_sample(&wins_cf[*wi], n, e, schedule)?;
                        let pred = unet_forward(&unet.config, &bound, &Var::constant(x_t), n)?;
                        let diff = ops::sub(&Var::constant(e.clone()), &pred);
                        let sq = ops::sum(&ops::square(&diff));
                        loss_sum = Some(match loss_sum {
                            Some(acc) => ops::add(&acc, &sq),
                            None => sq,
                        });
                    }
                    let loss_sum = loss_sum.expect("non-empty chunk");
                    let value = loss_sum.value().item().into_f64();
                    let mut store = backward(&loss_sum)?;
                    Ok((value, bound.gradients(&unet.params, &mut store)))
                })
                .collect();

            let elems = (batch_idx.len() * config.channels * config.window) as f64;
            let mut grads: Option<GradientMap<F>> = None;
            let mut loss_value = 0.0f64;
            for r in results {
                let (v, g) = r?;
                loss_value += v;
                match grads.as_mut() {
                    Some(acc) => acc.add_assign(&g),
                    None => grads = Some(g),
                }
            }
            let mut grads = grads.expect("at least one chunk");
            grads.scale_assign(F::from_f64(1.0 / elems));
            loss_value /= elems;

            if !loss_value.is_finite() {
                return Err(Error::NonFiniteLoss { iteration });
            }
            if let Some(max_norm) = opts.grad_clip {
                grads.clip_global_norm(max_norm);
            }
            opt.step(&mut unet.params, &grads)?;
            epoch_loss += loss_value;
            batches += 1;
            iteration += 1;
        }

        let epoch_loss = epoch_loss / batches.max(1) as f64;
        history.push(EpochLoss {
            epoch,
            loss: epoch_loss,
        });
        if opts.log_progress {
            log::info!("denoiser epoch {epoch}: loss {epoch_loss:.6}");
        }

        // plateau-based early stop on a short trailing mean
        recent.push(epoch_loss);
        if recent.len() > 3 {
            recent.remove(0);
        }
        let smoothed = recent.iter().sum::<f64>() / recent.len() as f64;
        if smoothed < best_smoothed * (1.0 - opts.min_rel_improvement) {
            best_smoothed = smoothed;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= opts.patience {
                if opts.log_progress {
                    log::info!("denoiser early stop at epoch {epoch}");
                }
                break;
            }
        }
    }

    Ok((
        TrainedDenoiser {
            config: unet.config,
            params: unet.params,
            schedule: schedule.clone(),
        },
        history,
    ))
}
