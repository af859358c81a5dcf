//! Adversarial and reconstruction objectives.
//!
//! The adversarial game feeds the generator's output and pure noise into the
//! discriminator; both players descend their own term. Log arguments are
//! floored at 1e-7 (on top of the discriminator's logit clamp).
//!
//! The reconstruction loss sends the generated window through the frozen
//! denoising chain at the step chosen by the discriminator. The integer step
//! mapping is piecewise constant, so by default no gradient flows through it;
//! an optional soft relaxation interpolates between the two bracketing chain
//! lengths.

use crate::diffusion::{denoise_module, DenoiseVariant, NoisePredictor, NoiseSchedule};
use crate::error::Result;
use crate::gan::discriminator::Discriminator;
use crate::gan::generator::Generator;
use crate::gan::mapper::StepMapper;
use crate::graph::{ops, Var};
use crate::params::Bound;
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const LOG_FLOOR: f64 = 1e-7;

fn log_clamped<F: Scalar>(p: &Var<F>) -> Var<F> {
    ops::ln_clamped(p, F::from_f64(LOG_FLOOR))
}

fn one_minus<F: Scalar>(p: &Var<F>) -> Var<F> {
    ops::sub(&Var::constant(Tensor::full(p.shape(), F::one())), p)
}

/// The discriminator's descent objective:
/// `lambda * mean(log D(G(W)) + log(1 - D(z)))`.
pub fn discriminator_adv_loss<F: Scalar>(p_gw: &Var<F>, p_z: &Var<F>, lambda: f64) -> Var<F> {
    let term = ops::add(&log_clamped(p_gw), &log_clamped(&one_minus(p_z)));
    ops::scale(&ops::mean(&term), F::from_f64(lambda))
}

/// The generator's descent objective:
/// `lambda * mean(log D(z) + log(1 - D(G(W))))`.
pub fn generator_adv_loss<F: Scalar>(p_gw: &Var<F>, p_z: &Var<F>, lambda: f64) -> Var<F> {
    let term = ops::add(&log_clamped(p_z), &log_clamped(&one_minus(p_gw)));
    ops::scale(&ops::mean(&term), F::from_f64(lambda))
}

/// Both adversarial scalars for a batch: `(generator_term, discriminator_term)`.
pub fn adversarial_losses<F: Scalar>(
    g: &Generator<F>,
    g_bound: &Bound<F>,
    d: &Discriminator<F>,
    d_bound: &Bound<F>,
    batch: &Var<F>,
    z: &Var<F>,
    lambda: f64,
) -> Result<(Var<F>, Var<F>)> {
    let gw = g.forward(g_bound, batch)?;
    let p_gw = d.forward_prob(d_bound, &gw)?;
    let p_z = d.forward_prob(d_bound, z)?;
    Ok((
        generator_adv_loss(&p_gw, &p_z, lambda),
        discriminator_adv_loss(&p_gw, &p_z, lambda),
    ))
}

/// Reconstruction error of one window through the chain at a fixed step
/// count. Inputs are channels-first `[1, D, w]`; the result is the
/// per-element mean squared error.
pub fn window_reconstruction_loss<F: Scalar>(
    target_cf: &Var<F>,
    g_out_cf: &Var<F>,
    n_star: usize,
    predictor: &dyn NoisePredictor<F>,
    schedule: &NoiseSchedule,
    variant: DenoiseVariant,
    rng: Option<&mut RngStream>,
) -> Result<Var<F>> {
    let recon = denoise_module(g_out_cf, n_star, predictor, schedule, variant, rng)?;
    Ok(ops::mse(target_cf, &recon))
}

/// Soft relaxation of the step selection: interpolate the reconstruction
/// losses of the two bracketing step counts with a weight that is affine in
/// the probability, letting gradients reach the discriminator.
#[allow(clippy::too_many_arguments)]
pub fn window_reconstruction_loss_soft<F: Scalar>(
    target_cf: &Var<F>,
    g_out_cf: &Var<F>,
    p: &Var<F>,
    mapper: &StepMapper,
    predictor: &dyn NoisePredictor<F>,
    schedule: &NoiseSchedule,
    variant: DenoiseVariant,
    mut rng: Option<&mut RngStream>,
) -> Result<Var<F>> {
    let p_val = p.value().item().into_f64();
    let (n_lo, lo, hi) = mapper.step_bracket(p_val)?;
    let loss_lo = window_reconstruction_loss(
        target_cf,
        g_out_cf,
        n_lo,
        predictor,
        schedule,
        variant,
        rng.as_deref_mut(),
    )?;
    let loss_hi = window_reconstruction_loss(
        target_cf,
        g_out_cf,
        n_lo + 1,
        predictor,
        schedule,
        variant,
        rng,
    )?;
    // frac = (p - lo) / (hi - lo), clamped to [0, 1]
    let p_flat = ops::reshape(p, vec![1]);
    let frac = ops::clamp(
        &ops::scale(
            &ops::add_scalar(&p_flat, F::from_f64(-lo)),
            F::from_f64(1.0 / (hi - lo)),
        ),
        F::zero(),
        F::one(),
    );
    let one_minus_frac = one_minus(&frac);
    Ok(ops::add(
        &ops::mul(&ops::reshape(&loss_lo, vec![1]), &one_minus_frac),
        &ops::mul(&ops::reshape(&loss_hi, vec![1]), &frac),
    ))
}

/// Tensor-level reconstruction loss of a whole batch with hard step
/// selection: the controller pipeline `W -> G(W) -> D -> f -> M` evaluated
/// without gradients. Returns the mean loss and the chosen steps.
#[allow(clippy::too_many_arguments)]
pub fn reconstruction_loss<F: Scalar>(
    g: &Generator<F>,
    d: &Discriminator<F>,
    mapper: &StepMapper,
    predictor: &dyn NoisePredictor<F>,
    schedule: &NoiseSchedule,
    variant: DenoiseVariant,
    batch: &Tensor<F>,
    mut rng: Option<&mut RngStream>,
) -> Result<(f64, Vec<usize>)> {
    let b = batch.shape()[0];
    let (w, dch) = (batch.shape()[1], batch.shape()[2]);
    let gw = g.predict(batch)?;
    let probs = d.predict_prob(&gw)?;
    let mut total = 0.0f64;
    let mut steps = Vec::with_capacity(b);
    for i in 0..b {
        let n_star = mapper.map_step(probs[i])?;
        steps.push(n_star);
        let gw_i = Tensor::new(
            vec![w, dch],
            gw.data()[i * w * dch..(i + 1) * w * dch].to_vec(),
        )?
        .transposed2()
        .reshaped(vec![1, dch, w])?;
        let target_i = Tensor::new(
            vec![w, dch],
            batch.data()[i * w * dch..(i + 1) * w * dch].to_vec(),
        )?
        .transposed2()
        .reshaped(vec![1, dch, w])?;
        let loss = window_reconstruction_loss(
            &Var::constant(target_i),
            &Var::constant(gw_i),
            n_star,
            predictor,
            schedule,
            variant,
            rng.as_deref_mut(),
        )?;
        total += loss.value().item().into_f64();
    }
    Ok((total / b as f64, steps))
}
