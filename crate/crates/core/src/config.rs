//! Experiment configuration: every field has a documented default, unknown
//! keys are rejected, and the whole tree round-trips through serde.

use serde::{Deserialize, Serialize};

use crate::detect::Aggregation;
use crate::diffusion::{DenoiseVariant, DenoiserConfig, DenoiserTrainOptions, NoiseSchedule, ScheduleShape};
use crate::error::{Error, Result};
use crate::gan::{DiscriminatorConfig, GanTrainOptions, GeneratorConfig, StepMapperKind};
use crate::optim::AdamWConfig;

/// Scale presets: `desk` for CPU-sized runs, `paper` for the full benchmark
/// shape (50,000 timepoints, larger networks, more epochs).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

impl std::str::FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(Error::Config(format!("unknown scale `{other}` (expected desk|paper)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Series length per dataset.
    pub timesteps: usize,
    /// Number of dimensions.
    pub dims: usize,
    /// Dimension receiving anomalies.
    pub anomaly_dim: usize,
    /// Fraction of anomalous timepoints for point kinds.
    pub ratio_point: f64,
    /// Fraction of anomalous timepoints for interval kinds.
    pub ratio_interval: f64,
    pub contaminate_train: bool,
    /// Error on constant training dimensions instead of mapping them to 0.5.
    pub strict_normalization: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            timesteps: 50_000,
            dims: 5,
            anomaly_dim: 0,
            ratio_point: 0.02,
            ratio_interval: 0.05,
            contaminate_train: false,
            strict_normalization: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSection {
    pub window: usize,
    pub stride: usize,
}

impl Default for WindowSection {
    fn default() -> Self {
        Self { window: 64, stride: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub n_steps: usize,
    /// Endpoints quoted at the 1000-step reference; see `auto_scale`.
    pub beta_start: f64,
    pub beta_end: f64,
    /// Scale the endpoints by `reference_steps / n_steps` so the cumulative
    /// noise profile is preserved when `n_steps` changes.
    pub auto_scale: bool,
    pub reference_steps: usize,
    pub shape: ScheduleShape,
    /// Required bound on `alpha_bar[N]`.
    pub max_final_alpha_bar: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            n_steps: 100,
            beta_start: 1e-4,
            beta_end: 0.02,
            auto_scale: true,
            reference_steps: 1000,
            shape: ScheduleShape::Linear,
            max_final_alpha_bar: 0.05,
        }
    }
}

impl ScheduleSection {
    pub fn build(&self) -> Result<NoiseSchedule> {
        let factor = if self.auto_scale {
            self.reference_steps as f64 / self.n_steps as f64
        } else {
            1.0
        };
        NoiseSchedule::build_checked(
            self.n_steps,
            self.beta_start * factor,
            (self.beta_end * factor).min(0.999),
            self.shape,
            self.max_final_alpha_bar,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserSection {
    pub base_width: usize,
    pub depth: usize,
    pub emb_dim: usize,
    pub activation: crate::layers::Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub patience: usize,
    pub min_rel_improvement: f64,
}

impl Default for DenoiserSection {
    fn default() -> Self {
        Self {
            base_width: 16,
            depth: 2,
            emb_dim: 32,
            activation: crate::layers::Activation::Silu,
            epochs: 60,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 1e-4,
            grad_clip: 1.0,
            patience: 10,
            min_rel_improvement: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub hidden: usize,
    pub layers: usize,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        Self { hidden: 48, layers: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorSection {
    pub hidden: Vec<usize>,
}

impl Default for DiscriminatorSection {
    fn default() -> Self {
        Self {
            hidden: vec![96, 48],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanSection {
    /// Weight of the adversarial terms for both players.
    pub lambda: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Cap on batches per epoch (0 = full pass).
    pub batches_per_epoch: usize,
    pub grad_clip: f64,
    pub mapper: StepMapperKind,
    pub variant: DenoiseVariant,
    pub straight_through: bool,
}

impl Default for GanSection {
    fn default() -> Self {
        Self {
            lambda: 0.7,
            lr_g: 1e-4,
            lr_d: 1e-4,
            weight_decay: 1e-4,
            epochs: 15,
            batch_size: 16,
            batches_per_epoch: 0,
            grad_clip: 1.0,
            mapper: StepMapperKind::Schedule,
            variant: DenoiseVariant::Ddpm,
            straight_through: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSection {
    /// Detection stride (window overlap = window / stride).
    pub stride: usize,
    pub aggregation: Aggregation,
    /// `best_f1` (on the validation split) or `quantile`.
    pub threshold: ThresholdKind,
    pub quantile_q: f64,
    /// Add a flush-right window when the strided grid leaves a tail.
    pub cover_tail: bool,
    pub point_adjust: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    BestF1,
    Quantile,
}

impl Default for DetectionSection {
    fn default() -> Self {
        Self {
            stride: 32,
            aggregation: Aggregation::Mean,
            threshold: ThresholdKind::BestF1,
            quantile_q: 0.99,
            cover_tail: true,
            point_adjust: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 17 }
    }
}

/// Root configuration. Defaults correspond to the paper-scale benchmark
/// shape; [`ExperimentConfig::apply_scale`] switches to the CPU-sized desk
/// preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub windowing: WindowSection,
    pub schedule: ScheduleSection,
    pub denoiser: DenoiserSection,
    pub generator: GeneratorSection,
    pub discriminator: DiscriminatorSection,
    pub gan: GanSection,
    pub detection: DetectionSection,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.apply_scale(Scale::Desk);
        c
    }

    /// Switch series length, network widths and epoch budgets between the
    /// desk and paper presets. Other fields are untouched.
    pub fn apply_scale(&mut self, scale: Scale) {
        match scale {
            Scale::Desk => {
                self.dataset.timesteps = 2_000;
                self.denoiser.base_width = 8;
                self.denoiser.epochs = 30;
                self.generator.hidden = 32;
                self.discriminator.hidden = vec![64, 32];
                self.gan.epochs = 10;
                self.gan.batches_per_epoch = 12;
            }
            Scale::Paper => {
                let d = Self::default();
                self.dataset.timesteps = d.dataset.timesteps;
                self.denoiser.base_width = d.denoiser.base_width;
                self.denoiser.epochs = d.denoiser.epochs;
                self.generator.hidden = d.generator.hidden;
                self.discriminator.hidden = d.discriminator.hidden;
                self.gan.epochs = d.gan.epochs;
                self.gan.batches_per_epoch = d.gan.batches_per_epoch;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.windowing.window == 0 || self.windowing.stride == 0 {
            return Err(Error::Config("window and stride must be positive".into()));
        }
        if self.detection.stride == 0 {
            return Err(Error::Config("detection stride must be positive".into()));
        }
        if !(self.detection.quantile_q > 0.0 && self.detection.quantile_q < 1.0) {
            return Err(Error::Config(format!(
                "quantile_q {} outside (0, 1)",
                self.detection.quantile_q
            )));
        }
        if self.gan.lambda <= 0.0 {
            return Err(Error::Config(format!("gan.lambda {} must be positive", self.gan.lambda)));
        }
        self.denoiser_config().validate()?;
        self.generator_config().validate()?;
        self.discriminator_config().validate()?;
        self.schedule.build()?;
        Ok(())
    }

    pub fn denoiser_config(&self) -> DenoiserConfig {
        DenoiserConfig {
            window: self.windowing.window,
            channels: self.dataset.dims,
            depth: self.denoiser.depth,
            base_width: self.denoiser.base_width,
            emb_dim: self.denoiser.emb_dim,
            activation: self.denoiser.activation,
        }
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            window: self.windowing.window,
            channels: self.dataset.dims,
            hidden: self.generator.hidden,
            layers: self.generator.layers,
        }
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        DiscriminatorConfig {
            window: self.windowing.window,
            channels: self.dataset.dims,
            hidden: self.discriminator.hidden.clone(),
        }
    }

    pub fn denoiser_train_options(&self) -> DenoiserTrainOptions {
        DenoiserTrainOptions {
            epochs: self.denoiser.epochs,
            batch_size: self.denoiser.batch_size,
            optimizer: AdamWConfig {
                lr: self.denoiser.lr,
                weight_decay: self.denoiser.weight_decay,
                ..AdamWConfig::default()
            },
            grad_clip: (self.denoiser.grad_clip > 0.0).then_some(self.denoiser.grad_clip),
            patience: self.denoiser.patience,
            min_rel_improvement: self.denoiser.min_rel_improvement,
            chunk_size: 8,
            log_progress: true,
        }
    }

    pub fn gan_train_options(&self) -> GanTrainOptions {
        GanTrainOptions {
            epochs: self.gan.epochs,
            batch_size: self.gan.batch_size,
            batches_per_epoch: (self.gan.batches_per_epoch > 0).then_some(self.gan.batches_per_epoch),
            opt_g: AdamWConfig {
                lr: self.gan.lr_g,
                weight_decay: self.gan.weight_decay,
                ..AdamWConfig::default()
            },
            opt_d: AdamWConfig {
                lr: self.gan.lr_d,
                weight_decay: self.gan.weight_decay,
                ..AdamWConfig::default()
            },
            lambda_adv: self.gan.lambda,
            grad_clip: (self.gan.grad_clip > 0.0).then_some(self.gan.grad_clip),
            variant: self.gan.variant,
            straight_through: self.gan.straight_through,
            chunk_size: 4,
            log_progress: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_match_expected_values() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.schedule.n_steps, 100);
        assert_eq!(c.gan.lambda, 0.7);
        assert_eq!(c.dataset.timesteps, 50_000);
        assert_eq!(c.windowing.window, 64);
    }

    #[test]
    fn desk_preset_validates() {
        let c = ExperimentConfig::desk();
        c.validate().unwrap();
        assert_eq!(c.dataset.timesteps, 2_000);
        assert_eq!(c.schedule.n_steps, 100, "scale preset keeps N");
    }

    #[test]
    fn serde_roundtrip_is_identity() {
        let c = ExperimentConfig::desk();
        let json = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        let json = r#"{"dataset": {"timesteps": 100, "bogus_key": 1}}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(json).is_err());
    }

    #[test]
    fn scaled_schedule_reaches_near_zero_signal() {
        let c = ExperimentConfig::default();
        let s = c.schedule.build().unwrap();
        assert!(s.alpha_bar(100) < 0.01);
    }
}
