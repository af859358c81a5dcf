//! Synthetic benchmark generation: sinusoid-mixture base signals with one of
//! five anomaly behaviours injected into a single dimension.
//!
//! Point kinds inject exactly `ceil(ratio * T)` labeled timepoints; interval
//! kinds inject intervals totaling exactly that many points, labeling every
//! point inside. By default the training partition stays anomaly-free.

use serde::{Deserialize, Serialize};

use super::series::{SeriesDataset, SplitBounds};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    GlobalPoint,
    ContextualPoint,
    Seasonal,
    Shapelet,
    Trend,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 5] = [
        AnomalyKind::GlobalPoint,
        AnomalyKind::ContextualPoint,
        AnomalyKind::Seasonal,
        AnomalyKind::Shapelet,
        AnomalyKind::Trend,
    ];

    pub fn is_point(&self) -> bool {
        matches!(self, AnomalyKind::GlobalPoint | AnomalyKind::ContextualPoint)
    }

    pub fn dataset_name(&self) -> &'static str {
        match self {
            AnomalyKind::GlobalPoint => "global",
            AnomalyKind::ContextualPoint => "contextual",
            AnomalyKind::Seasonal => "seasonal",
            AnomalyKind::Shapelet => "shapelet",
            AnomalyKind::Trend => "trend",
        }
    }
}

impl std::str::FromStr for AnomalyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" | "global_point" => Ok(AnomalyKind::GlobalPoint),
            "contextual" | "contextual_point" => Ok(AnomalyKind::ContextualPoint),
            "seasonal" => Ok(AnomalyKind::Seasonal),
            "shapelet" => Ok(AnomalyKind::Shapelet),
            "trend" => Ok(AnomalyKind::Trend),
            other => Err(Error::Config(format!("unknown anomaly kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    /// Fraction of the series length to label anomalous, in `[0, 0.5)`.
    /// Zero means a clean series.
    pub ratio: f64,
    /// Severity multiplier (>= 1) on the per-kind minimum magnitude.
    pub magnitude: f64,
    /// The single dimension receiving anomalies.
    pub dim: usize,
    /// Allow injections inside the training partition.
    pub contaminate_train: bool,
}

impl Default for AnomalySpec {
    fn default() -> Self {
        Self {
            kind: AnomalyKind::GlobalPoint,
            ratio: 0.02,
            magnitude: 1.0,
            dim: 0,
            contaminate_train: false,
        }
    }
}

impl AnomalySpec {
    pub fn validate(&self, dims: usize) -> Result<()> {
        if !(0.0..0.5).contains(&self.ratio) {
            return Err(Error::Config(format!("anomaly ratio {} outside [0, 0.5)", self.ratio)));
        }
        if self.magnitude < 1.0 {
            return Err(Error::Config(format!("magnitude {} must be >= 1", self.magnitude)));
        }
        if self.dim >= dims {
            return Err(Error::Config(format!(
                "affected dimension {} out of range for D = {dims}",
                self.dim
            )));
        }
        Ok(())
    }
}

/// Per-dimension base-signal parameters: a slow and a fast sinusoid plus
/// observation noise.
#[derive(Clone, Debug)]
struct BaseDim {
    period1: f64,
    amp1: f64,
    phase1: f64,
    period2: f64,
    amp2: f64,
    phase2: f64,
    noise_sd: f64,
}

impl BaseDim {
    fn draw(rng: &mut RngStream) -> Self {
        Self {
            period1: rng.uniform_range(48.0, 160.0),
            amp1: rng.uniform_range(0.6, 1.0),
            phase1: rng.uniform_range(0.0, std::f64::consts::TAU),
            period2: rng.uniform_range(10.0, 36.0),
            amp2: rng.uniform_range(0.15, 0.35),
            phase2: rng.uniform_range(0.0, std::f64::consts::TAU),
            noise_sd: 0.04,
        }
    }

    fn clean(&self, t: usize) -> f64 {
        let x = t as f64;
        self.amp1 * (std::f64::consts::TAU * x / self.period1 + self.phase1).sin()
            + self.amp2 * (std::f64::consts::TAU * x / self.period2 + self.phase2).sin()
    }

    /// Clean value with the slow component's frequency scaled.
    fn clean_freq_scaled(&self, t: usize, factor: f64) -> f64 {
        let x = t as f64;
        self.amp1 * (std::f64::consts::TAU * x * factor / self.period1 + self.phase1).sin()
            + self.amp2 * (std::f64::consts::TAU * x / self.period2 + self.phase2).sin()
    }

    /// Square wave of the slow component at equal amplitude.
    fn square_shape(&self, t: usize) -> f64 {
        let x = t as f64;
        let s = (std::f64::consts::TAU * x / self.period1 + self.phase1).sin();
        self.amp1 * s.signum()
            + self.amp2 * (std::f64::consts::TAU * x / self.period2 + self.phase2).sin()
    }
}

fn stddev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Pick `count` distinct positions inside `range`, preferring non-adjacent
/// points (point anomalies are isolated).
fn pick_points(rng: &mut RngStream, range: std::ops::Range<usize>, count: usize) -> Result<Vec<usize>> {
    let len = range.end - range.start;
    if count > len {
        return Err(Error::Config(format!(
            "cannot place {count} point anomalies in a region of {len} timepoints"
        )));
    }
    let mut picked: Vec<usize> = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while picked.len() < count {
        let cand = range.start + rng.below(len);
        attempts += 1;
        // after many rejections relax the isolation requirement
        let want_isolated = attempts <= 40 * count.max(1);
        let clash = picked.iter().any(|p| {
            if want_isolated {
                cand.abs_diff(*p) < 2
            } else {
                cand == *p
            }
        });
        if !clash {
            picked.push(cand);
        }
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Split `total` points into one to three interval lengths and place them in
/// disjoint zones of the eligible region.
fn pick_intervals(
    rng: &mut RngStream,
    range: std::ops::Range<usize>,
    total: usize,
) -> Result<Vec<std::ops::Range<usize>>> {
    let len = range.end - range.start;
    if total > len {
        return Err(Error::Config(format!(
            "cannot place {total} interval points in a region of {len} timepoints"
        )));
    }
    let parts = if total < 60 { 1 } else { 1 + rng.below(3) };
    let mut lens = vec![total / parts; parts];
    let assigned: usize = lens.iter().sum();
    lens[0] += total - assigned;
    let zone = len / parts;
    let mut out = Vec::with_capacity(parts);
    for (i, part_len) in lens.iter().enumerate() {
        if zone < *part_len {
            return Err(Error::Config(format!(
                "interval of {part_len} does not fit its placement zone of {zone}"
            )));
        }
        let zone_start = range.start + i * zone;
        let slack = zone - *part_len;
        let off = if slack == 0 { 0 } else { rng.below(slack) };
        out.push(zone_start + off..zone_start + off + part_len);
    }
    Ok(out)
}

/// Generate a labeled synthetic dataset with a 2:1:2 split.
pub fn generate_synthetic<F: Scalar>(
    spec: &AnomalySpec,
    t_len: usize,
    dims: usize,
    seed: u64,
) -> Result<SeriesDataset<F>> {
    if t_len < 100 || dims == 0 {
        return Err(Error::Config(format!(
            "need T >= 100 and D >= 1, got T = {t_len}, D = {dims}"
        )));
    }
    spec.validate(dims)?;

    let base_rng = RngStream::new(seed);
    let mut param_rng = base_rng.substream("base-params");
    let mut noise_rng = base_rng.substream("base-noise");
    let mut inject_rng = base_rng.substream("inject");

    let dim_params: Vec<BaseDim> = (0..dims).map(|_| BaseDim::draw(&mut param_rng)).collect();

    // base signal plus a noiseless copy of the affected dimension
    let mut values = vec![0.0f64; t_len * dims];
    let mut clean_affected = vec![0.0f64; t_len];
    for t in 0..t_len {
        for (d, p) in dim_params.iter().enumerate() {
            let clean = p.clean(t);
            if d == spec.dim {
                clean_affected[t] = clean;
            }
            values[t * dims + d] = clean + p.noise_sd * noise_rng.normal::<f64>();
        }
    }

    let splits = SplitBounds::ratio_2_1_2(t_len);
    let mut labels = vec![0u8; t_len];

    if spec.ratio > 0.0 {
        let count = (spec.ratio * t_len as f64).ceil() as usize;
        let eligible = if spec.contaminate_train {
            0..t_len
        } else {
            splits.train_end..t_len
        };
        let affected: Vec<f64> = (0..t_len).map(|t| values[t * dims + spec.dim]).collect();
        let sigma = stddev(&affected);
        let ap = &dim_params[spec.dim];

        match spec.kind {
            AnomalyKind::GlobalPoint => {
                let points = pick_points(&mut inject_rng, eligible, count)?;
                for &t in &points {
                    let dir = if inject_rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                    let spike = sigma * (3.0 * spec.magnitude + inject_rng.uniform_range(0.2, 2.0));
                    values[t * dims + spec.dim] += dir * spike;
                    labels[t] = 1;
                }
            }
            AnomalyKind::ContextualPoint => {
                let half = 25usize; // rolling window of ~50 points
                let gmin = affected.iter().cloned().fold(f64::INFINITY, f64::min);
                let gmax = affected.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let points = pick_points(&mut inject_rng, eligible, count)?;
                for &t in &points {
                    let lo = t.saturating_sub(half);
                    let hi = (t + half).min(t_len);
                    let local = &affected[lo..hi];
                    let local_mean = local.iter().sum::<f64>() / local.len() as f64;
                    let local_sd = stddev(local).max(1e-3);
                    let offset = 3.2 * spec.magnitude * local_sd;
                    // pick the direction with more headroom inside the global range
                    let up = local_mean + offset;
                    let down = local_mean - offset;
                    let v = if (gmax - up).abs() < (down - gmin).abs() && down >= gmin {
                        down
                    } else {
                        up.min(gmax)
                    };
                    values[t * dims + spec.dim] = v.clamp(gmin, gmax);
                    labels[t] = 1;
                }
            }
            AnomalyKind::Seasonal => {
                let factor = inject_rng.uniform_range(2.0, 3.0) * spec.magnitude.min(1.5);
                for iv in pick_intervals(&mut inject_rng, eligible, count)? {
                    for t in iv {
                        values[t * dims + spec.dim] =
                            ap.clean_freq_scaled(t, factor) + ap.noise_sd * inject_rng.normal::<f64>();
                        labels[t] = 1;
                    }
                }
            }
            AnomalyKind::Shapelet => {
                for iv in pick_intervals(&mut inject_rng, eligible, count)? {
                    for t in iv {
                        values[t * dims + spec.dim] =
                            ap.square_shape(t) + ap.noise_sd * inject_rng.normal::<f64>();
                        labels[t] = 1;
                    }
                }
            }
            AnomalyKind::Trend => {
                for iv in pick_intervals(&mut inject_rng, eligible, count)? {
                    let len = (iv.end - iv.start).max(1);
                    let dir = if inject_rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                    let slope = dir * 2.0 * spec.magnitude * sigma / len as f64;
                    for (k, t) in iv.enumerate() {
                        values[t * dims + spec.dim] += slope * (k + 1) as f64;
                        labels[t] = 1;
                    }
                }
            }
        }

        // every split must keep at least one normal point
        for (name, r) in [
            ("train", 0..splits.train_end),
            ("val", splits.train_end..splits.val_end),
            ("test", splits.val_end..t_len),
        ] {
            if labels[r].iter().all(|l| *l == 1) {
                return Err(Error::Config(format!(
                    "anomaly ratio {} leaves no normal points in the {name} split",
                    spec.ratio
                )));
            }
        }
    }

    let data: Vec<F> = values.iter().map(|v| F::from_f64(*v)).collect();
    SeriesDataset::new(
        spec.kind.dataset_name(),
        Tensor::new(vec![t_len, dims], data)?,
        labels,
        splits,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_ratio_is_clean_base_signal() {
        let spec = AnomalySpec {
            ratio: 0.0,
            ..Default::default()
        };
        let ds = generate_synthetic::<f64>(&spec, 500, 3, 7).unwrap();
        assert!(ds.labels.iter().all(|l| *l == 0));
        assert_eq!(ds.t_len(), 500);
        assert_eq!(ds.dims(), 3);
    }

    #[test]
    fn global_point_count_and_magnitude() {
        let spec = AnomalySpec {
            kind: AnomalyKind::GlobalPoint,
            ratio: 0.01,
            ..Default::default()
        };
        let t_len = 1000;
        let ds = generate_synthetic::<f64>(&spec, t_len, 2, 11).unwrap();
        let marked: Vec<usize> = (0..t_len).filter(|t| ds.labels[*t] == 1).collect();
        assert_eq!(marked.len(), 10, "ceil(0.01 * 1000) = 10 spikes");

        // compare against a clean regeneration of the same seed
        let clean = generate_synthetic::<f64>(
            &AnomalySpec {
                ratio: 0.0,
                ..spec.clone()
            },
            t_len,
            2,
            11,
        )
        .unwrap();
        let base: Vec<f64> = (0..t_len).map(|t| clean.values.at2(t, 0)).collect();
        let sigma = stddev(&base);
        for &t in &marked {
            let delta = (ds.values.at2(t, 0) - clean.values.at2(t, 0)).abs();
            assert!(delta >= 3.0 * sigma, "spike at {t}: |delta| = {delta}, 3sigma = {}", 3.0 * sigma);
        }
        // unaffected dimension untouched
        for t in 0..t_len {
            assert_eq!(ds.values.at2(t, 1), clean.values.at2(t, 1));
        }
    }

    #[test]
    fn train_partition_clean_by_default() {
        for kind in AnomalyKind::ALL {
            let spec = AnomalySpec {
                kind,
                ratio: 0.05,
                ..Default::default()
            };
            let ds = generate_synthetic::<f64>(&spec, 600, 2, 3).unwrap();
            let train_end = ds.splits.train_end;
            assert!(
                ds.labels[..train_end].iter().all(|l| *l == 0),
                "{kind:?}: anomalies leaked into the training partition"
            );
            let marked = ds.labels.iter().filter(|l| **l == 1).count();
            assert_eq!(marked, (0.05f64 * 600.0).ceil() as usize, "{kind:?}");
        }
    }

    #[test]
    fn same_seed_identical_dataset() {
        let spec = AnomalySpec {
            kind: AnomalyKind::Seasonal,
            ratio: 0.05,
            ..Default::default()
        };
        let a = generate_synthetic::<f32>(&spec, 400, 4, 9).unwrap();
        let b = generate_synthetic::<f32>(&spec, 400, 4, 9).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.labels, b.labels);
        let c = generate_synthetic::<f32>(&spec, 400, 4, 10).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn contextual_points_stay_in_global_range() {
        let spec = AnomalySpec {
            kind: AnomalyKind::ContextualPoint,
            ratio: 0.02,
            ..Default::default()
        };
        let ds = generate_synthetic::<f64>(&spec, 800, 2, 5).unwrap();
        let clean = generate_synthetic::<f64>(
            &AnomalySpec {
                ratio: 0.0,
                ..spec.clone()
            },
            800,
            2,
            5,
        )
        .unwrap();
        let base: Vec<f64> = (0..800).map(|t| clean.values.at2(t, 0)).collect();
        let gmin = base.iter().cloned().fold(f64::INFINITY, f64::min);
        let gmax = base.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for t in 0..800 {
            if ds.labels[t] == 1 {
                let v = ds.values.at2(t, 0);
                assert!(v >= gmin - 1e-9 && v <= gmax + 1e-9, "t={t}: {v} outside [{gmin}, {gmax}]");
            }
        }
    }

    #[test]
    fn excessive_ratio_rejected() {
        let spec = AnomalySpec {
            ratio: 0.6,
            ..Default::default()
        };
        assert!(generate_synthetic::<f64>(&spec, 500, 2, 1).is_err());
    }
}
