//! End-to-end orchestration: dataset generation, the two training stages,
//! and the benchmark grid. The CLI and the acceptance suite both drive these.

use serde::{Deserialize, Serialize};

use crate::bundle::{covered_only, DetectMode, ModelBundle};
use crate::config::ExperimentConfig;
use crate::data::{generate_synthetic, make_windows, normalize, AnomalyKind, AnomalySpec, SeriesDataset, Split};
use crate::detect::best_f1_threshold;
use crate::diffusion::{train_denoiser, EpochLoss, NoiseSchedule, TrainedDenoiser};
use crate::error::Result;
use crate::gan::{train_gan, GanEpochStats, StepMapper};
use crate::rng::RngStream;
use crate::scalar::Scalar;

/// Generator spec for one of the five benchmark kinds under a config.
pub fn dataset_spec(config: &ExperimentConfig, kind: AnomalyKind) -> AnomalySpec {
    AnomalySpec {
        kind,
        ratio: if kind.is_point() {
            config.dataset.ratio_point
        } else {
            config.dataset.ratio_interval
        },
        magnitude: 1.0,
        dim: config.dataset.anomaly_dim,
        contaminate_train: config.dataset.contaminate_train,
    }
}

/// Deterministic per-kind generation seed derived from the run seed.
pub fn dataset_seed(seed: u64, kind: AnomalyKind) -> u64 {
    RngStream::new(seed).substream(kind.dataset_name()).seed()
}

pub fn generate_dataset<F: Scalar>(
    config: &ExperimentConfig,
    kind: AnomalyKind,
    seed: u64,
) -> Result<SeriesDataset<F>> {
    generate_synthetic(
        &dataset_spec(config, kind),
        config.dataset.timesteps,
        config.dataset.dims,
        dataset_seed(seed, kind),
    )
}

pub struct DenoiserStage<F: Scalar> {
    pub denoiser: TrainedDenoiser<F>,
    pub history: Vec<EpochLoss>,
    pub norm_stats: crate::data::NormStats,
    pub schedule: NoiseSchedule,
}

/// Normalize on training statistics, window the training partition, and run
/// the noise-prediction training loop.
pub fn train_denoiser_stage<F: Scalar>(
    config: &ExperimentConfig,
    dataset: &SeriesDataset<F>,
    seed: u64,
) -> Result<DenoiserStage<F>> {
    config.validate()?;
    let (normalized, norm_stats) = normalize(dataset, config.dataset.strict_normalization)?;
    let (train_values, _, _) = normalized.split_slice(Split::Train);
    let windows = make_windows(&train_values, config.windowing.window, config.windowing.stride)?;
    let schedule = config.schedule.build()?;
    let opts = config.denoiser_train_options();
    let den_seed = RngStream::new(seed).substream("train-denoiser").seed();
    let (denoiser, history) =
        train_denoiser(&windows, &config.denoiser_config(), &schedule, &opts, den_seed)?;
    Ok(DenoiserStage {
        denoiser,
        history,
        norm_stats,
        schedule,
    })
}

pub struct GanStage<F: Scalar> {
    pub bundle: ModelBundle<F>,
    pub history: Vec<GanEpochStats>,
}

/// Train the controller pair against a frozen denoiser and assemble the
/// self-sufficient bundle.
pub fn train_gan_stage<F: Scalar>(
    config: &ExperimentConfig,
    dataset: &SeriesDataset<F>,
    stage: &DenoiserStage<F>,
    seed: u64,
) -> Result<GanStage<F>> {
    let normalized = stage.norm_stats.apply(&dataset.values)?;
    let r = dataset.split_range(Split::Train);
    let train_values = normalized.rows(r.start, r.end);
    let windows = make_windows(&train_values, config.windowing.window, config.windowing.stride)?;
    let mapper = StepMapper::from_kind(config.gan.mapper, &stage.schedule);
    let gan_seed = RngStream::new(seed).substream("train-gan").seed();
    let (generator, discriminator, history) = train_gan(
        &windows,
        config.generator_config(),
        config.discriminator_config(),
        &stage.denoiser,
        &mapper,
        &config.gan_train_options(),
        gan_seed,
    )?;
    let bundle = ModelBundle {
        denoiser: stage.denoiser.clone(),
        generator,
        discriminator,
        mapper_kind: config.gan.mapper,
        norm_stats: stage.norm_stats.clone(),
        config: config.clone(),
        seed,
    };
    Ok(GanStage { bundle, history })
}

/// Both stages in sequence.
pub fn full_train<F: Scalar>(
    config: &ExperimentConfig,
    dataset: &SeriesDataset<F>,
    seed: u64,
) -> Result<(GanStage<F>, Vec<EpochLoss>)> {
    let stage = train_denoiser_stage(config, dataset, seed)?;
    let den_history = stage.history.clone();
    let gan = train_gan_stage(config, dataset, &stage, seed)?;
    Ok((gan, den_history))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub dataset: String,
    pub method: String,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Best achievable F1 over all thresholds on the test scores.
    pub best_f1: f64,
}

/// Detect with the configured threshold strategy and also record the best
/// achievable F1 on the test scores.
pub fn evaluate_mode<F: Scalar>(
    bundle: &ModelBundle<F>,
    dataset: &SeriesDataset<F>,
    mode: DetectMode,
    seed: u64,
) -> Result<BenchmarkRow> {
    let detect_seed = RngStream::new(seed).substream("detect").seed();
    let report = bundle.detect(dataset, mode, None, detect_seed)?;
    let m = report.metrics.expect("labels supplied");
    let (test_scores, test_labels) = bundle.score_split(dataset, Split::Test, mode, detect_seed)?;
    let (s, l) = covered_only(&test_scores, &test_labels);
    let best = best_f1_threshold(&s, &l)?.1.f1;
    Ok(BenchmarkRow {
        dataset: dataset.name.clone(),
        method: mode.tag(),
        threshold: report.threshold,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        best_f1: best,
    })
}

/// The benchmark grid: per dataset, train once (denoiser shared by every
/// method, controller trained on top), then evaluate each method.
pub fn run_benchmark<F: Scalar>(
    config: &ExperimentConfig,
    kinds: &[AnomalyKind],
    fixed_steps: &[usize],
    seed: u64,
) -> Result<Vec<BenchmarkRow>> {
    let mut rows = Vec::new();
    for kind in kinds {
        let dataset: SeriesDataset<F> = generate_dataset(config, *kind, seed)?;
        log::info!("benchmark: training on `{}`", dataset.name);
        let (gan, _) = full_train(config, &dataset, seed)?;
        let mut modes: Vec<DetectMode> = fixed_steps
            .iter()
            .map(|m| DetectMode::DiffusionFixed(*m))
            .collect();
        modes.push(DetectMode::DiffGan);
        for mode in modes {
            let row = evaluate_mode(&gan.bundle, &dataset, mode, seed)?;
            log::info!(
                "benchmark: {} / {} -> P {:.4} R {:.4} F1 {:.4} (best {:.4})",
                row.dataset,
                row.method,
                row.precision,
                row.recall,
                row.f1,
                row.best_f1
            );
            rows.push(row);
        }
    }
    Ok(rows)
}
