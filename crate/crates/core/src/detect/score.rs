//! Per-timepoint anomaly scores from windowed reconstructions.
//!
//! Each window is reconstructed independently; the per-timepoint squared
//! error (summed over dimensions) is aggregated across every window covering
//! that timepoint. Timepoints no window covers are marked, never silently
//! zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Mean,
    Median,
}

/// Per-timepoint scores with coverage counts. `scores[t]` is meaningful only
/// where `coverage[t] > 0`.
#[derive(Clone, Debug)]
pub struct ScoreSeries {
    pub scores: Vec<f64>,
    pub coverage: Vec<u32>,
}

impl ScoreSeries {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn covered(&self) -> usize {
        self.coverage.iter().filter(|c| **c > 0).count()
    }

    /// Binary labels via `score > delta`; uncovered points predict 0.
    pub fn predict(&self, delta: f64) -> Vec<u8> {
        self.scores
            .iter()
            .zip(self.coverage.iter())
            .map(|(s, c)| u8::from(*c > 0 && *s > delta))
            .collect()
    }
}

/// Window start offsets covering a series of length `t_len`: floor-semantics
/// strides, plus one flush-right window when `cover_tail` is set and the
/// strided grid leaves a tail.
pub fn detection_origins(t_len: usize, w: usize, stride: usize, cover_tail: bool) -> Result<Vec<usize>> {
    if w > t_len {
        return Err(Error::SeriesTooShort { len: t_len, window: w });
    }
    if stride == 0 {
        return Err(Error::Config("detection stride must be positive".into()));
    }
    let k = (t_len - w) / stride + 1;
    let mut origins: Vec<usize> = (0..k).map(|j| j * stride).collect();
    let covered_end = (k - 1) * stride + w;
    if cover_tail && covered_end < t_len {
        origins.push(t_len - w);
    }
    Ok(origins)
}

/// Score a `[T, D]` series given a per-window reconstructor mapping
/// `(window_index, window [w, D])` to a reconstruction of the same shape.
/// Windows are processed in parallel; aggregation is a deterministic
/// reduction in index order.
pub fn score_with<F, R>(
    series: &Tensor<F>,
    w: usize,
    stride: usize,
    cover_tail: bool,
    aggregation: Aggregation,
    reconstruct: R,
) -> Result<ScoreSeries>
where
    F: Scalar,
    R: Fn(usize, &Tensor<F>) -> Result<Tensor<F>> + Sync,
{
    if series.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            context: "score_with".into(),
            expected: "[T, D]".into(),
            got: format!("{:?}", series.shape()),
        });
    }
    let t_len = series.shape()[0];
    let d = series.shape()[1];
    let origins = detection_origins(t_len, w, stride, cover_tail)?;

    let window_errors: Vec<Result<Vec<f64>>> = origins
        .par_iter()
        .enumerate()
        .map(|(widx, &start)| {
            let win = series.rows(start, start + w);
            let recon = reconstruct(widx, &win)?;
            if recon.shape() != win.shape() {
                return Err(Error::ShapeMismatch {
                    context: "window reconstruction".into(),
                    expected: format!("{:?}", win.shape()),
                    got: format!("{:?}", recon.shape()),
                });
            }
            // per-offset squared error summed over dimensions
            let mut errs = vec![0.0f64; w];
            for o in 0..w {
                let mut acc = 0.0f64;
                for dim in 0..d {
                    let diff = win.at2(o, dim).into_f64() - recon.at2(o, dim).into_f64();
                    acc += diff * diff;
                }
                errs[o] = acc;
            }
            Ok(errs)
        })
        .collect();

    let mut coverage = vec![0u32; t_len];
    match aggregation {
        Aggregation::Mean => {
            let mut acc = vec![0.0f64; t_len];
            for (widx, res) in window_errors.into_iter().enumerate() {
                let errs = res?;
                let start = origins[widx];
                for (o, e) in errs.into_iter().enumerate() {
                    acc[start + o] += e;
                    coverage[start + o] += 1;
                }
            }
            let scores = acc
                .into_iter()
                .zip(coverage.iter())
                .map(|(s, c)| if *c > 0 { s / *c as f64 } else { f64::NAN })
                .collect();
            Ok(ScoreSeries { scores, coverage })
        }
        Aggregation::Median => {
            let mut per_point: Vec<Vec<f64>> = vec![Vec::new(); t_len];
            for (widx, res) in window_errors.into_iter().enumerate() {
                let errs = res?;
                let start = origins[widx];
                for (o, e) in errs.into_iter().enumerate() {
                    per_point[start + o].push(e);
                    coverage[start + o] += 1;
                }
            }
            let scores = per_point
                .into_iter()
                .map(|mut v| {
                    if v.is_empty() {
                        f64::NAN
                    } else {
                        v.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
                        let mid = v.len() / 2;
                        if v.len() % 2 == 1 {
                            v[mid]
                        } else {
                            0.5 * (v[mid - 1] + v[mid])
                        }
                    }
                })
                .collect();
            Ok(ScoreSeries { scores, coverage })
        }
    }
}
