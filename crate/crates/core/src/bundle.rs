//! Self-sufficient model bundles: denoiser, generator and discriminator
//! checkpoints, the step mapper kind, normalization statistics and a config
//! snapshot. Detection needs nothing beyond a bundle directory and a series.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::{ExperimentConfig, ThresholdKind};
use crate::data::{NormStats, SeriesDataset, Split};
use crate::detect::{
    best_f1_threshold, quantile_threshold, score_with, DetectionReport, ScoreSeries,
};
use crate::diffusion::{partial_diffusion_reconstruct, denoise_module_t, TrainedDenoiser};
use crate::error::{Error, Result};
use crate::gan::{Discriminator, Generator, StepMapper, StepMapperKind};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

/// Scoring mode: the trained controller or the fixed-step baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetectMode {
    DiffGan,
    DiffusionFixed(usize),
}

impl DetectMode {
    pub fn tag(&self) -> String {
        match self {
            DetectMode::DiffGan => "diffgan".to_string(),
            DetectMode::DiffusionFixed(m) => format!("diffusion-{m}"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BundleMeta {
    format_version: u32,
    mapper: StepMapperKind,
    norm_stats: NormStats,
    config: ExperimentConfig,
    seed: u64,
}

#[derive(Clone, Debug)]
pub struct ModelBundle<F: Scalar> {
    pub denoiser: TrainedDenoiser<F>,
    pub generator: Generator<F>,
    pub discriminator: Discriminator<F>,
    pub mapper_kind: StepMapperKind,
    pub norm_stats: NormStats,
    pub config: ExperimentConfig,
    pub seed: u64,
}

impl<F: Scalar> ModelBundle<F> {
    pub fn mapper(&self) -> StepMapper {
        StepMapper::from_kind(self.mapper_kind, &self.denoiser.schedule)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let meta = BundleMeta {
            format_version: BUNDLE_FORMAT_VERSION,
            mapper: self.mapper_kind,
            norm_stats: self.norm_stats.clone(),
            config: self.config.clone(),
            seed: self.seed,
        };
        std::fs::write(dir.join("bundle.json"), serde_json::to_string_pretty(&meta)?)?;
        save_checkpoint(
            &dir.join("denoiser.ckpt"),
            &Checkpoint {
                kind: "denoiser".into(),
                arch: serde_json::to_value(&self.denoiser.config)?,
                schedule: Some(self.denoiser.schedule.clone()),
                seed: Some(self.seed),
                params: self.denoiser.params.clone(),
                opt: None,
            },
        )?;
        save_checkpoint(
            &dir.join("generator.ckpt"),
            &Checkpoint {
                kind: "generator".into(),
                arch: serde_json::to_value(&self.generator.config)?,
                schedule: None,
                seed: Some(self.seed),
                params: self.generator.params.clone(),
                opt: None,
            },
        )?;
        save_checkpoint(
            &dir.join("discriminator.ckpt"),
            &Checkpoint {
                kind: "discriminator".into(),
                arch: serde_json::to_value(&self.discriminator.config)?,
                schedule: None,
                seed: Some(self.seed),
                params: self.discriminator.params.clone(),
                opt: None,
            },
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: BundleMeta =
            serde_json::from_str(&std::fs::read_to_string(dir.join("bundle.json"))?)?;
        if meta.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported bundle format version {}",
                meta.format_version
            )));
        }
        let den = load_checkpoint::<F>(&dir.join("denoiser.ckpt"))?;
        let schedule = den
            .schedule
            .clone()
            .ok_or_else(|| Error::Config("denoiser checkpoint lacks schedule".into()))?;
        let denoiser = TrainedDenoiser {
            config: den.arch_as()?,
            params: den.params,
            schedule,
        };
        let gen = load_checkpoint::<F>(&dir.join("generator.ckpt"))?;
        let generator = Generator {
            config: gen.arch_as()?,
            params: gen.params,
        };
        let dis = load_checkpoint::<F>(&dir.join("discriminator.ckpt"))?;
        let discriminator = Discriminator {
            config: dis.arch_as()?,
            params: dis.params,
        };
        Ok(Self {
            denoiser,
            generator,
            discriminator,
            mapper_kind: meta.mapper,
            norm_stats: meta.norm_stats,
            config: meta.config,
            seed: meta.seed,
        })
    }

    /// Score an already-normalized `[T, D]` slice under a mode. Per-window
    /// noise comes from substreams indexed by window, so results do not
    /// depend on scoring order or thread count; modes share the forward
    /// ("data") noise stream but not the reverse-sampler stream.
    pub fn score_series(&self, series: &Tensor<F>, mode: DetectMode, seed: u64) -> Result<ScoreSeries> {
        let cfg = &self.config;
        let w = cfg.windowing.window;
        let schedule = &self.denoiser.schedule;
        if let DetectMode::DiffusionFixed(m) = mode {
            schedule.check_step(m)?;
        }
        let mapper = self.mapper();
        let base = RngStream::new(seed);

        score_with(
            series,
            w,
            cfg.detection.stride,
            cfg.detection.cover_tail,
            cfg.detection.aggregation,
            |widx, win| {
                let predictor = self.denoiser.predictor();
                let mut sampler = base.substream_indexed("detect-sampler", widx as u64);
                match mode {
                    DetectMode::DiffGan => {
                        let g_in = win.clone().reshaped(vec![1, w, win.shape()[1]])?;
                        let g_out = self.generator.predict(&g_in)?;
                        let p = self.discriminator.predict_prob(&g_out)?[0];
                        let n_star = mapper.map_step(p)?;
                        let x_cf = g_out
                            .reshaped(vec![w, win.shape()[1]])?
                            .transposed2()
                            .reshaped(vec![1, win.shape()[1], w])?;
                        let rec = denoise_module_t(
                            &x_cf,
                            n_star,
                            &predictor,
                            schedule,
                            cfg.gan.variant,
                            Some(&mut sampler),
                        )?;
                        Ok(rec
                            .reshaped(vec![win.shape()[1], w])?
                            .transposed2())
                    }
                    DetectMode::DiffusionFixed(m) => {
                        let mut noise = base.substream_indexed("detect-noise", widx as u64);
                        let x_cf = win
                            .transposed2()
                            .reshaped(vec![1, win.shape()[1], w])?;
                        let rec = partial_diffusion_reconstruct(
                            &x_cf,
                            m,
                            &predictor,
                            schedule,
                            &mut noise,
                            Some(&mut sampler),
                        )?;
                        Ok(rec
                            .reshaped(vec![win.shape()[1], w])?
                            .transposed2())
                    }
                }
            },
        )
    }

    /// Normalize a dataset with the stored statistics and score one split.
    /// Returns the scores and the split's labels.
    pub fn score_split(
        &self,
        dataset: &SeriesDataset<F>,
        split: Split,
        mode: DetectMode,
        seed: u64,
    ) -> Result<(ScoreSeries, Vec<u8>)> {
        let normalized = self.norm_stats.apply(&dataset.values)?;
        let r = dataset.split_range(split);
        let slice = normalized.rows(r.start, r.end);
        let labels = dataset.labels[r].to_vec();
        let scores = self.score_series(&slice, mode, seed)?;
        Ok((scores, labels))
    }

    /// Full detection on the test split: choose a threshold (explicit, or by
    /// the configured strategy) and assemble the report.
    pub fn detect(
        &self,
        dataset: &SeriesDataset<F>,
        mode: DetectMode,
        delta_override: Option<f64>,
        seed: u64,
    ) -> Result<DetectionReport> {
        let delta = match delta_override {
            Some(d) => {
                if !(d >= 0.0) {
                    return Err(Error::Config(format!("threshold {d} must be >= 0")));
                }
                d
            }
            None => match self.config.detection.threshold {
                ThresholdKind::BestF1 => {
                    let (val_scores, val_labels) =
                        self.score_split(dataset, Split::Val, mode, seed ^ 0x5eed_0001)?;
                    let (covered_scores, covered_labels) =
                        covered_only(&val_scores, &val_labels);
                    best_f1_threshold(&covered_scores, &covered_labels)?.0
                }
                ThresholdKind::Quantile => {
                    let (train_scores, _) =
                        self.score_split(dataset, Split::Train, mode, seed ^ 0x5eed_0002)?;
                    let covered: Vec<f64> = train_scores
                        .scores
                        .iter()
                        .zip(train_scores.coverage.iter())
                        .filter(|(_, c)| **c > 0)
                        .map(|(s, _)| *s)
                        .collect();
                    quantile_threshold(&covered, self.config.detection.quantile_q)?
                }
            },
        };
        let (test_scores, test_labels) = self.score_split(dataset, Split::Test, mode, seed)?;
        DetectionReport::build(
            &mode.tag(),
            &test_scores,
            delta,
            Some(&test_labels),
            self.config.detection.point_adjust,
        )
    }
}

/// Drop uncovered timepoints from a score/label pair.
pub fn covered_only(scores: &ScoreSeries, labels: &[u8]) -> (Vec<f64>, Vec<u8>) {
    let mut s = Vec::with_capacity(scores.len());
    let mut l = Vec::with_capacity(labels.len());
    for t in 0..scores.len() {
        if scores.coverage[t] > 0 {
            s.push(scores.scores[t]);
            l.push(labels[t]);
        }
    }
    (s, l)
}
