//! Noise schedule constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleShape {
    Linear,
    Cosine,
}

/// Per-step constants `alpha[n]`, `alpha_bar[n] = prod alpha[1..=n]` and
/// `sigma[n] = sqrt((1 - alpha[n]) (1 - alpha_bar[n-1]) / (1 - alpha_bar[n]))`
/// for `n = 1..=N`, with `alpha_bar[0] = 1` (hence `sigma[1] = 0`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseSchedule {
    n_steps: usize,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
}

impl NoiseSchedule {
    /// Build from explicit betas. No strength check; see [`Self::build_checked`].
    pub fn from_betas(betas: &[f64]) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        for (i, b) in betas.iter().enumerate() {
            if !(*b > 0.0 && *b < 1.0) {
                return Err(Error::Config(format!("beta[{}] = {b} outside (0, 1)", i + 1)));
            }
        }
        let alpha: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(alpha.len());
        let mut prod = 1.0f64;
        for a in &alpha {
            prod *= a;
            alpha_bar.push(prod);
        }
        let mut sigma = Vec::with_capacity(alpha.len());
        for n in 1..=alpha.len() {
            let ab_prev = if n == 1 { 1.0 } else { alpha_bar[n - 2] };
            let ab = alpha_bar[n - 1];
            sigma.push(((1.0 - alpha[n - 1]) * (1.0 - ab_prev) / (1.0 - ab)).sqrt());
        }
        Ok(Self {
            n_steps: alpha.len(),
            alpha,
            alpha_bar,
            sigma,
        })
    }

    /// Build a linear or cosine schedule of `n` steps.
    ///
    /// For the linear shape, `beta_start`/`beta_end` are interpreted directly
    /// as the endpoint betas. The cosine shape derives betas from the
    /// squared-cosine cumulative curve and ignores the endpoints.
    pub fn build(n: usize, beta_start: f64, beta_end: f64, shape: ScheduleShape) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!(
                "invalid beta endpoints: start {beta_start}, end {beta_end}"
            )));
        }
        let betas: Vec<f64> = match shape {
            ScheduleShape::Linear => (0..n)
                .map(|i| {
                    if n == 1 {
                        beta_start
                    } else {
                        beta_start + (beta_end - beta_start) * i as f64 / (n - 1) as f64
                    }
                })
                .collect(),
            ScheduleShape::Cosine => {
                let s = 0.008f64;
                let f = |t: f64| ((t / n as f64 + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2).cos().powi(2);
                let f0 = f(0.0);
                (1..=n)
                    .map(|i| {
                        let ab = f(i as f64) / f0;
                        let ab_prev = f((i - 1) as f64) / f0;
                        (1.0 - ab / ab_prev).clamp(1e-8, 0.999)
                    })
                    .collect()
            }
        };
        Self::from_betas(&betas)
    }

    /// Build and verify the schedule destroys nearly all signal by the final
    /// step (`alpha_bar[N] <= max_final_alpha_bar`).
    pub fn build_checked(
        n: usize,
        beta_start: f64,
        beta_end: f64,
        shape: ScheduleShape,
        max_final_alpha_bar: f64,
    ) -> Result<Self> {
        let sched = Self::build(n, beta_start, beta_end, shape)?;
        let last = sched.alpha_bar(n);
        if last > max_final_alpha_bar {
            return Err(Error::ScheduleTooWeak {
                alpha_bar_final: last,
                tolerance: max_final_alpha_bar,
            });
        }
        Ok(sched)
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// `alpha[n]`, 1-indexed.
    pub fn alpha(&self, n: usize) -> f64 {
        self.alpha[n - 1]
    }

    /// `alpha_bar[n]`, 1-indexed with `alpha_bar(0) = 1`.
    pub fn alpha_bar(&self, n: usize) -> f64 {
        if n == 0 {
            1.0
        } else {
            self.alpha_bar[n - 1]
        }
    }

    /// `sigma[n]`, 1-indexed; `sigma(1) = 0`.
    pub fn sigma(&self, n: usize) -> f64 {
        self.sigma[n - 1]
    }

    /// `1 - alpha_bar[n]` for n = 1..=N, the noise-intensity grid used by the
    /// schedule-based step mapper.
    pub fn noise_intensities(&self) -> Vec<f64> {
        self.alpha_bar.iter().map(|ab| 1.0 - ab).collect()
    }

    pub fn check_step(&self, n: usize) -> Result<()> {
        if n < 1 || n > self.n_steps {
            Err(Error::StepRange {
                n,
                max: self.n_steps,
            })
        } else {
            Ok(())
        }
    }
}

/// Direct sampling of the forward process at step `n`:
/// `sqrt(alpha_bar_n) * x0 + sqrt(1 - alpha_bar_n) * eps`.
pub fn forward_sample<F: Scalar>(
    x0: &Tensor<F>,
    n: usize,
    eps: &Tensor<F>,
    schedule: &NoiseSchedule,
) -> Result<Tensor<F>> {
    schedule.check_step(n)?;
    if x0.shape() != eps.shape() {
        return Err(Error::ShapeMismatch {
            context: "forward_sample".into(),
            expected: format!("{:?}", x0.shape()),
            got: format!("{:?}", eps.shape()),
        });
    }
    let ab = schedule.alpha_bar(n);
    let a = F::from_f64(ab.sqrt());
    let b = F::from_f64((1.0 - ab).sqrt());
    Ok(x0.zip_map(eps, |x, e| a * x + b * e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn single_step_closed_form() {
        let s = NoiseSchedule::from_betas(&[0.1]).unwrap();
        assert!((s.alpha(1) - 0.9).abs() < 1e-12);
        assert!((s.alpha_bar(1) - 0.9).abs() < 1e-12);
        assert_eq!(s.sigma(1), 0.0);
    }

    #[test]
    fn two_step_hand_values() {
        let s = NoiseSchedule::from_betas(&[0.1, 0.2]).unwrap();
        assert!((s.alpha_bar(1) - 0.9).abs() < 1e-12);
        assert!((s.alpha_bar(2) - 0.72).abs() < 1e-12);
        // sigma[2] = sqrt(0.2 * 0.1 / 0.28)
        let expect = (0.2 * 0.1 / 0.28f64).sqrt();
        assert!((s.sigma(2) - expect).abs() < 1e-12);
        assert!((s.sigma(2) - 0.2673).abs() < 5e-4);
    }

    #[test]
    fn scaled_linear_100_destroys_signal() {
        // 1000-step endpoints scaled by 1000/100
        let s = NoiseSchedule::build(100, 1e-4 * 10.0, 0.02 * 10.0, ScheduleShape::Linear).unwrap();
        assert!(s.alpha_bar(100) < 0.01, "alpha_bar[100] = {}", s.alpha_bar(100));
        // strictly decreasing
        for n in 2..=100 {
            assert!(s.alpha_bar(n) < s.alpha_bar(n - 1));
        }
    }

    #[test]
    fn weak_schedule_rejected() {
        let err = NoiseSchedule::build_checked(10, 1e-5, 1e-4, ScheduleShape::Linear, 0.05).unwrap_err();
        assert!(matches!(err, Error::ScheduleTooWeak { .. }));
    }

    #[test]
    fn cosine_shape_monotone() {
        let s = NoiseSchedule::build(50, 1e-4, 0.02, ScheduleShape::Cosine).unwrap();
        for n in 2..=50 {
            assert!(s.alpha_bar(n) < s.alpha_bar(n - 1));
        }
        assert!(s.alpha_bar(50) < 0.05);
    }

    #[test]
    fn forward_sample_zero_cases() {
        let s = NoiseSchedule::from_betas(&[0.1, 0.2]).unwrap();
        let x0 = Tensor::<f64>::from_vec(vec![1.0, -2.0]);
        let zero = Tensor::<f64>::zeros(&[2]);

        let no_noise = forward_sample(&x0, 2, &zero, &s).unwrap();
        let c = 0.72f64.sqrt();
        assert!((no_noise.data()[0] - c).abs() < 1e-12);
        assert!((no_noise.data()[1] + 2.0 * c).abs() < 1e-12);

        let eps = Tensor::<f64>::from_vec(vec![0.5, 0.5]);
        let no_signal = forward_sample(&zero, 2, &eps, &s).unwrap();
        let d = (1.0f64 - 0.72).sqrt() * 0.5;
        assert!((no_signal.data()[0] - d).abs() < 1e-12);

        assert!(forward_sample(&x0, 3, &zero, &s).is_err());
    }

    #[test]
    fn forward_sample_monte_carlo_moments() {
        // Single fixed x0 scalar; empirical mean -> sqrt(ab)*x0, variance -> 1-ab.
        let s = NoiseSchedule::build(100, 1e-3, 0.2, ScheduleShape::Linear).unwrap();
        let mut rng = RngStream::new(99);
        let x0 = Tensor::<f64>::from_vec(vec![0.8]);
        for n in [1usize, 50, 100] {
            let trials = 100_000usize;
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..trials {
                let eps = rng.normal_tensor::<f64>(&[1]);
                let v = forward_sample(&x0, n, &eps, &s).unwrap().data()[0];
                sum += v;
                sumsq += v * v;
            }
            let mean = sum / trials as f64;
            let var = sumsq / trials as f64 - mean * mean;
            let ab = s.alpha_bar(n);
            let expect_mean = ab.sqrt() * 0.8;
            let expect_var = 1.0 - ab;
            let se = (expect_var / trials as f64).sqrt();
            assert!(
                (mean - expect_mean).abs() < 3.0 * se + 1e-9,
                "n={n}: mean {mean} vs {expect_mean}"
            );
            assert!(
                (var - expect_var).abs() < 0.02 * expect_var.max(1e-3),
                "n={n}: var {var} vs {expect_var}"
            );
        }
    }
}
