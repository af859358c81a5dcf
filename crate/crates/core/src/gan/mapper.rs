//! Probability-to-step mapping: the discriminator output, read as "how close
//! to pure noise", selects the number of denoising steps.

use serde::{Deserialize, Serialize};

use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMapperKind {
    /// Nearest integer to `N * p` (round half up).
    Linear,
    /// Largest `n` whose cumulative noise intensity `1 - alpha_bar_n` does
    /// not exceed `p`; 0 when none qualifies.
    Schedule,
}

/// Monotone map from a probability in `[0, 1]` to a step in `{0, ..., N}`.
#[derive(Clone, Debug)]
pub struct StepMapper {
    kind: StepMapperKind,
    n_steps: usize,
    /// `1 - alpha_bar_n` for n = 1..=N (strictly increasing).
    intensities: Vec<f64>,
}

impl StepMapper {
    pub fn linear(n_steps: usize) -> Self {
        Self {
            kind: StepMapperKind::Linear,
            n_steps,
            intensities: Vec::new(),
        }
    }

    pub fn schedule(schedule: &NoiseSchedule) -> Self {
        Self {
            kind: StepMapperKind::Schedule,
            n_steps: schedule.n_steps(),
            intensities: schedule.noise_intensities(),
        }
    }

    pub fn from_kind(kind: StepMapperKind, schedule: &NoiseSchedule) -> Self {
        match kind {
            StepMapperKind::Linear => Self::linear(schedule.n_steps()),
            StepMapperKind::Schedule => Self::schedule(schedule),
        }
    }

    pub fn kind(&self) -> StepMapperKind {
        self.kind
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Map a probability to an integer step.
    pub fn map_step(&self, p: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(Error::ProbabilityRange { value: p });
        }
        Ok(match self.kind {
            StepMapperKind::Linear => {
                let s = (self.n_steps as f64 * p + 0.5).floor() as usize;
                s.min(self.n_steps)
            }
            StepMapperKind::Schedule => self.intensities.partition_point(|i| *i <= p),
        })
    }

    /// Continuous step position used by the soft (straight-through) recon
    /// relaxation: returns `(n_lo, lo_p, hi_p)` such that the hard step lies
    /// between `n_lo` and `n_lo + 1` as `p` travels from `lo_p` to `hi_p`.
    pub fn step_bracket(&self, p: f64) -> Result<(usize, f64, f64)> {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(Error::ProbabilityRange { value: p });
        }
        Ok(match self.kind {
            StepMapperKind::Linear => {
                let s = self.n_steps as f64 * p;
                let n_lo = (s.floor() as usize).min(self.n_steps.saturating_sub(1));
                let n = self.n_steps as f64;
                (n_lo, n_lo as f64 / n, (n_lo + 1) as f64 / n)
            }
            StepMapperKind::Schedule => {
                let n_lo = self
                    .intensities
                    .partition_point(|i| *i <= p)
                    .min(self.n_steps.saturating_sub(1));
                let lo = if n_lo == 0 { 0.0 } else { self.intensities[n_lo - 1] };
                let hi = self.intensities[n_lo];
                (n_lo, lo, hi)
            }
        })
    }
}
