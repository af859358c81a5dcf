//! Joint generator/discriminator training against a frozen denoiser.
//!
//! Per batch: sample one noise window per batch element; update the
//! discriminator (adversarial term only, unless the soft step relaxation is
//! enabled — the hard integer mapping passes no gradient); then update the
//! generator on its adversarial term plus the reconstruction error through
//! the frozen denoising chain at the discriminator-selected step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::discriminator::{Discriminator, DiscriminatorConfig};
use super::generator::{Generator, GeneratorConfig};
use super::losses::{
    discriminator_adv_loss, generator_adv_loss, window_reconstruction_loss,
    window_reconstruction_loss_soft, LOG_FLOOR,
};
use super::mapper::StepMapper;
use crate::data::windows::WindowSet;
use crate::diffusion::{DenoiseVariant, TrainedDenoiser};
use crate::error::{Error, Result};
use crate::graph::{backward, ops, Var};
use crate::optim::{AdamWConfig, AdamWState};
use crate::params::GradientMap;
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanTrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// Cap on batches per epoch (full pass when absent).
    pub batches_per_epoch: Option<usize>,
    pub opt_g: AdamWConfig,
    pub opt_d: AdamWConfig,
    /// Weight of the adversarial terms for both players.
    pub lambda_adv: f64,
    pub grad_clip: Option<f64>,
    /// Denoising-module variant used inside the reconstruction loss.
    pub variant: DenoiseVariant,
    /// Let reconstruction gradients reach the discriminator through a soft
    /// interpolation of the step selection.
    pub straight_through: bool,
    /// Samples per parallel gradient chunk for the generator update.
    pub chunk_size: usize,
    pub log_progress: bool,
}

impl Default for GanTrainOptions {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 16,
            batches_per_epoch: None,
            opt_g: AdamWConfig::with_lr(1e-4),
            opt_d: AdamWConfig::with_lr(1e-4),
            lambda_adv: 0.7,
            grad_clip: Some(1.0),
            variant: DenoiseVariant::Ddpm,
            straight_through: false,
            chunk_size: 4,
            log_progress: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GanEpochStats {
    pub epoch: usize,
    /// Discriminator adversarial loss (its descent objective).
    pub d_adv: f64,
    /// Generator adversarial loss (its descent objective).
    pub g_adv: f64,
    /// Reconstruction component of the generator objective.
    pub recon: f64,
    /// Mean selected denoising step over the epoch's batches.
    pub mean_step: f64,
    pub mean_p_gw: f64,
    pub mean_p_z: f64,
}

const COLLAPSE_VARIANCE: f64 = 1e-6;
const COLLAPSE_PATIENCE: usize = 100;

/// Train the controller pair. The denoiser stays frozen throughout.
pub fn train_gan<F: Scalar>(
    windows: &WindowSet<F>,
    gen_cfg: GeneratorConfig,
    disc_cfg: DiscriminatorConfig,
    denoiser: &TrainedDenoiser<F>,
    mapper: &StepMapper,
    opts: &GanTrainOptions,
    seed: u64,
) -> Result<(Generator<F>, Discriminator<F>, Vec<GanEpochStats>)> {
    gen_cfg.validate()?;
    disc_cfg.validate()?;
    opts.opt_g.validate()?;
    opts.opt_d.validate()?;
    let w = windows.window_size();
    let dch = windows.dims();
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
    if gen_cfg.window != w || gen_cfg.channels != dch || disc_cfg.window != w || disc_cfg.channels != dch {
        return Err(Error::Config(format!(
            "network configs must match windows of [{w}, {dch}]"
        )));
    }
    if mapper.n_steps() != denoiser.schedule.n_steps() {
        return Err(Error::Config(format!(
            "mapper steps {} != schedule steps {}",
            mapper.n_steps(),
            denoiser.schedule.n_steps()
        )));
    }
    if opts.lambda_adv <= 0.0 {
        return Err(Error::Config(format!("lambda {} must be positive", opts.lambda_adv)));
    }

    let base = RngStream::new(seed);
    let mut init_rng = base.substream("gan-init");
    let mut batch_rng = base.substream("gan-batch");
    let mut z_rng = base.substream("gan-z");

    let mut generator = Generator::init(gen_cfg, &mut init_rng)?;
    let mut discriminator = Discriminator::init(disc_cfg, &mut init_rng)?;
    let mut opt_g = AdamWState::new(opts.opt_g);
    let mut opt_d = AdamWState::new(opts.opt_d);

    // per-window tensors: [1, w, D] inputs and channels-first [1, D, w] targets
    let wins_bwd: Vec<Tensor<F>> = windows
        .iter()
        .map(|win| win.clone().reshaped(vec![1, w, dch]).expect("window shape"))
        .collect();
    let targets_cf: Vec<Tensor<F>> = windows
        .iter()
        .map(|win| {
            win.transposed2()
                .reshaped(vec![1, dch, w])
                .expect("window shape")
        })
        .collect();

    let mut order: Vec<usize> = (0..wins_bwd.len()).collect();
    let mut history = Vec::new();
    let mut collapse_streak = 0usize;
    let mut iteration = 0usize;
    let m = opts.batch_size;

    for epoch in 0..opts.epochs {
        batch_rng.shuffle(&mut order);
        let mut acc = GanEpochStats {
            epoch,
            d_adv: 0.0,
            g_adv: 0.0,
            recon: 0.0,
            mean_step: 0.0,
            mean_p_gw: 0.0,
            mean_p_z: 0.0,
        };
        let mut batches = 0usize;

        for batch_idx in order.chunks(m) {
            if batch_idx.len() < m {
                continue;
            }
            if let Some(cap) = opts.batches_per_epoch {
                if batches >= cap {
                    break;
                }
            }
            // one noise window per batch element, shared by both updates
            let z_list: Vec<Tensor<F>> = (0..m).map(|_| z_rng.normal_tensor(&[1, w, dch])).collect();

            // ---- discriminator update -------------------------------------
            let batch_t = stack_windows(&wins_bwd, batch_idx, w, dch);
            let z_t = stack_windows(&z_list, &(0..m).collect::<Vec<_>>(), w, dch);
            let g_frozen = generator.params.bind(false);
            let gw_const = generator.forward(&g_frozen, &Var::constant(batch_t))?;
            let d_bound = discriminator.params.bind(true);
            let p_gw = discriminator.forward_prob(&d_bound, &gw_const)?;
            let p_z = discriminator.forward_prob(&d_bound, &Var::constant(z_t))?;
            let mut d_loss = discriminator_adv_loss(&p_gw, &p_z, opts.lambda_adv);
            if opts.straight_through {
                // soft recon term: gradients reach phi through the relaxed step
                let den = denoiser.predictor();
                let mut recon_sum: Option<Var<F>> = None;
                for (slot, wi) in batch_idx.iter().enumerate() {
                    let g_cf = ops::transpose_12(&ops::narrow(&gw_const, 0, slot, 1));
                    let p_i = ops::narrow(&p_gw, 0, slot, 1);
                    let mut chain_rng = base.substream_indexed("gan-chain-d", (iteration as u64) << 16 | slot as u64);
                    let li = window_reconstruction_loss_soft(
                        &Var::constant(targets_cf[*wi].clone()),
                        &g_cf,
                        &p_i,
                        mapper,
                        &den,
                        &denoiser.schedule,
                        opts.variant,
                        Some(&mut chain_rng),
                    )?;
                    recon_sum = Some(match recon_sum {
                        Some(acc) => ops::add(&acc, &li),
                        None => li,
                    });
                }
                let recon_mean = ops::scale(
                    &ops::reshape(&recon_sum.expect("non-empty batch"), vec![]),
                    F::from_f64(1.0 / m as f64),
                );
                d_loss = ops::add(&d_loss, &recon_mean);
            }
            let d_loss_val = d_loss.value().item().into_f64();
            if !d_loss_val.is_finite() {
                return Err(Error::NonFiniteLoss { iteration });
            }
            let mut store = backward(&d_loss)?;
            let mut d_grads = d_bound.gradients(&discriminator.params, &mut store);
            if let Some(max_norm) = opts.grad_clip {
                d_grads.clip_global_norm(max_norm);
            }
            opt_d.step(&mut discriminator.params, &d_grads)?;

            // mode-collapse heuristic on the discriminator's view of G(W)
            let p_gw_vals: Vec<f64> = p_gw.value().data().iter().map(|p| p.into_f64()).collect();
            let pm = p_gw_vals.iter().sum::<f64>() / p_gw_vals.len() as f64;
            let pvar = p_gw_vals.iter().map(|p| (p - pm) * (p - pm)).sum::<f64>() / p_gw_vals.len() as f64;
            if pvar < COLLAPSE_VARIANCE {
                collapse_streak += 1;
                if collapse_streak == COLLAPSE_PATIENCE {
                    log::warn!(
                        "possible mode collapse: D(G(W)) variance < {COLLAPSE_VARIANCE} for \
                         {COLLAPSE_PATIENCE} consecutive iterations"
                    );
                }
            } else {
                collapse_streak = 0;
            }

            // ---- generator update (with the updated discriminator) --------
            let chunk = opts.chunk_size.max(1);
            let slots: Vec<(usize, usize)> = batch_idx.iter().copied().enumerate().collect();
            let results: Vec<Result<GenChunk<F>>> = slots
                .par_chunks(chunk)
                .map(|chunk_slots| {
                    let g_bound = generator.params.bind(true);
                    let d_frozen = discriminator.params.bind(false);
                    let den = denoiser.predictor();
                    let mut loss_sum: Option<Var<F>> = None;
                    let mut stats = GenChunk {
                        grads: None,
                        g_adv: 0.0,
                        recon: 0.0,
                        steps: 0.0,
                        p_z: 0.0,
                    };
                    for (slot, wi) in chunk_slots.iter().copied() {
                        let x = Var::constant(wins_bwd[wi].clone());
                        let gw = generator.forward(&g_bound, &x)?;
                        let p_gw_i = discriminator.forward_prob(&d_frozen, &gw)?;
                        let p_z_i = discriminator.forward_prob(&d_frozen, &Var::constant(z_list[slot].clone()))?;
                        let p_val = p_gw_i.value().item().into_f64();
                        let adv = generator_adv_loss(&p_gw_i, &p_z_i, opts.lambda_adv);

                        let g_cf = ops::transpose_12(&gw);
                        let target = Var::constant(targets_cf[wi].clone());
                        let mut chain_rng =
                            base.substream_indexed("gan-chain", (iteration as u64) << 16 | slot as u64);
                        let recon = if opts.straight_through {
                            ops::reshape(
                                &window_reconstruction_loss_soft(
                                    &target,
                                    &g_cf,
                                    &p_gw_i,
                                    mapper,
                                    &den,
                                    &denoiser.schedule,
                                    opts.variant,
                                    Some(&mut chain_rng),
                                )?,
                                vec![],
                            )
                        } else {
                            let n_star = mapper.map_step(p_val)?;
                            stats.steps += n_star as f64;
                            window_reconstruction_loss(
                                &target,
                                &g_cf,
                                n_star,
                                &den,
                                &denoiser.schedule,
                                opts.variant,
                                Some(&mut chain_rng),
                            )?
                        };
                        if opts.straight_through {
                            stats.steps += mapper.map_step(p_val)? as f64;
                        }
                        stats.g_adv += adv.value().item().into_f64();
                        stats.recon += recon.value().item().into_f64();
                        stats.p_z += p_z_i.value().item().into_f64();
                        let sample_loss = ops::add(&adv, &recon);
                        loss_sum = Some(match loss_sum {
                            Some(acc) => ops::add(&acc, &sample_loss),
                            None => sample_loss,
                        });
                    }
                    let loss_sum = loss_sum.expect("non-empty chunk");
                    let mut store = backward(&loss_sum)?;
                    stats.grads = Some(g_bound.gradients(&generator.params, &mut store));
                    Ok(stats)
                })
                .collect();

            let mut g_grads: Option<GradientMap<F>> = None;
            let mut g_adv_val = 0.0f64;
            let mut recon_val = 0.0f64;
            let mut steps_val = 0.0f64;
            let mut p_z_val = 0.0f64;
            for r in results {
                let c = r?;
                g_adv_val += c.g_adv;
                recon_val += c.recon;
                steps_val += c.steps;
                p_z_val += c.p_z;
                let g = c.grads.expect("chunk gradients");
                match g_grads.as_mut() {
                    Some(acc) => acc.add_assign(&g),
                    None => g_grads = Some(g),
                }
            }
            let mut g_grads = g_grads.expect("at least one chunk");
            g_grads.scale_assign(F::from_f64(1.0 / m as f64));
            g_adv_val /= m as f64;
            recon_val /= m as f64;
            steps_val /= m as f64;
            p_z_val /= m as f64;
            if !(g_adv_val + recon_val).is_finite() {
                return Err(Error::NonFiniteLoss { iteration });
            }
            if let Some(max_norm) = opts.grad_clip {
                g_grads.clip_global_norm(max_norm);
            }
            opt_g.step(&mut generator.params, &g_grads)?;

            acc.d_adv += d_loss_val;
            acc.g_adv += g_adv_val;
            acc.recon += recon_val;
            acc.mean_step += steps_val;
            acc.mean_p_gw += pm;
            acc.mean_p_z += p_z_val;
            batches += 1;
            iteration += 1;
        }

        let b = batches.max(1) as f64;
        acc.d_adv /= b;
        acc.g_adv /= b;
        acc.recon /= b;
        acc.mean_step /= b;
        acc.mean_p_gw /= b;
        acc.mean_p_z /= b;
        if opts.log_progress {
            log::info!(
                "gan epoch {epoch}: d_adv {:.4} g_adv {:.4} recon {:.5} mean_step {:.1} p_gw {:.3} p_z {:.3}",
                acc.d_adv,
                acc.g_adv,
                acc.recon,
                acc.mean_step,
                acc.mean_p_gw,
                acc.mean_p_z
            );
        }
        history.push(acc);
    }

    // keep the clamp floor referenced for the loss contract
    debug_assert!(LOG_FLOOR > 0.0);
    Ok((generator, discriminator, history))
}

struct GenChunk<F: Scalar> {
    grads: Option<GradientMap<F>>,
    g_adv: f64,
    recon: f64,
    steps: f64,
    p_z: f64,
}

fn stack_windows<F: Scalar>(pool: &[Tensor<F>], idxs: &[usize], w: usize, dch: usize) -> Tensor<F> {
    let mut data = Vec::with_capacity(idxs.len() * w * dch);
    for i in idxs {
        data.extend_from_slice(pool[*i].data());
    }
    Tensor::new(vec![idxs.len(), w, dch], data).expect("stacked batch shape")
}
