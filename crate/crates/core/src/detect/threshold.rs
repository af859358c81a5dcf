//! Threshold selection over anomaly scores.

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, Metrics};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum ThresholdStrategy {
    /// Maximize F1 over the labeled validation scores.
    BestF1,
    /// q-quantile of (normal-only) reference scores.
    Quantile { q: f64 },
}

/// Candidate cut points: below the minimum, midpoints between consecutive
/// distinct sorted scores, and above the maximum. Labeling uses `score > δ`,
/// so these candidates realize every possible confusion matrix.
fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    sorted.dedup();
    let mut cands = Vec::with_capacity(sorted.len() + 1);
    let first = sorted[0];
    cands.push(if first > 0.0 { first / 2.0 } else { first - 1.0 });
    for pair in sorted.windows(2) {
        cands.push(0.5 * (pair[0] + pair[1]));
    }
    cands.push(sorted[sorted.len() - 1] + 1.0);
    cands
}

/// Best-F1 threshold over labeled scores: returns `(delta, metrics at delta)`.
/// Ties prefer the smallest threshold.
pub fn best_f1_threshold(scores: &[f64], labels: &[u8]) -> Result<(f64, Metrics)> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Config(format!(
            "scores ({}) and labels ({}) must be non-empty and equal-length",
            scores.len(),
            labels.len()
        )));
    }
    if !labels.iter().any(|l| *l == 1) {
        return Err(Error::DegenerateLabels);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFiniteValue {
            context: "threshold scores".into(),
        });
    }
    let distinct = {
        let mut s = scores.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        s.dedup();
        s.len()
    };
    if distinct == 1 {
        log::warn!("all scores identical; degenerate threshold equal to that value");
        let delta = scores[0];
        let preds: Vec<u8> = scores.iter().map(|s| u8::from(*s > delta)).collect();
        let m = evaluate(&preds, labels)?;
        return Ok((delta, m));
    }

    let mut best: Option<(f64, Metrics)> = None;
    for delta in candidate_thresholds(scores) {
        let preds: Vec<u8> = scores.iter().map(|s| u8::from(*s > delta)).collect();
        let m = evaluate(&preds, labels)?;
        let better = match &best {
            None => true,
            Some((bd, bm)) => m.f1 > bm.f1 + 1e-15 || (m.f1 >= bm.f1 - 1e-15 && delta < *bd && m.f1 >= bm.f1),
        };
        if better {
            best = Some((delta, m));
        }
    }
    Ok(best.expect("non-empty candidates"))
}

/// Nearest-rank quantile of reference scores.
pub fn quantile_threshold(scores: &[f64], q: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Config("quantile of zero scores".into()));
    }
    if !(0.0 < q && q < 1.0) {
        return Err(Error::Config(format!("quantile q = {q} outside (0, 1)")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

/// Dispatch on strategy. `labels` are required for [`ThresholdStrategy::BestF1`].
pub fn select_threshold(
    scores: &[f64],
    labels: Option<&[u8]>,
    strategy: ThresholdStrategy,
) -> Result<f64> {
    match strategy {
        ThresholdStrategy::BestF1 => {
            let labels = labels.ok_or(Error::DegenerateLabels)?;
            Ok(best_f1_threshold(scores, labels)?.0)
        }
        ThresholdStrategy::Quantile { q } => quantile_threshold(scores, q),
    }
}
