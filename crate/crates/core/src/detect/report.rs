//! Detection reports: threshold, per-timepoint decisions, confusion counts
//! and metrics, with JSON and CSV emission.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, point_adjust, Metrics};
use super::score::ScoreSeries;
use crate::error::{Error, Result};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Uncovered timepoints carry NaN scores in memory; JSON stores them as
/// nulls so the report round-trips.
mod scores_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opts: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
        opts.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opts = Vec::<Option<f64>>::deserialize(d)?;
        Ok(opts.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetectionReport {
    pub format_version: u32,
    /// Scoring mode tag, e.g. `diffgan` or `diffusion-50`.
    pub mode: String,
    pub threshold: f64,
    pub n_timepoints: usize,
    pub covered: usize,
    /// Indices no window covered (excluded from the metrics).
    pub uncovered: Vec<usize>,
    pub metrics: Option<Metrics>,
    pub point_adjusted: bool,
    #[serde(with = "scores_serde")]
    pub scores: Vec<f64>,
    pub predictions: Vec<u8>,
    pub labels: Option<Vec<u8>>,
}

impl DetectionReport {
    /// Assemble a report. `delta` must be non-negative; predictions follow
    /// the strict step-function convention `score > delta`.
    pub fn build(
        mode: &str,
        scores: &ScoreSeries,
        delta: f64,
        labels: Option<&[u8]>,
        adjust: bool,
    ) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(Error::Config(format!("threshold {delta} must be >= 0")));
        }
        if let Some(l) = labels {
            if l.len() != scores.len() {
                return Err(Error::Config(format!(
                    "labels length {} != scores length {}",
                    l.len(),
                    scores.len()
                )));
            }
        }
        let mut predictions = scores.predict(delta);
        let uncovered: Vec<usize> = scores
            .coverage
            .iter()
            .enumerate()
            .filter_map(|(t, c)| (*c == 0).then_some(t))
            .collect();

        let metrics = if let Some(labels) = labels {
            if adjust {
                predictions = point_adjust(&predictions, labels);
            }
            // uncovered points are excluded from the confusion counts
            let (mut p2, mut y2) = (Vec::new(), Vec::new());
            for t in 0..scores.len() {
                if scores.coverage[t] > 0 {
                    p2.push(predictions[t]);
                    y2.push(labels[t]);
                }
            }
            Some(evaluate(&p2, &y2)?)
        } else {
            None
        };

        Ok(Self {
            format_version: REPORT_FORMAT_VERSION,
            mode: mode.to_string(),
            threshold: delta,
            n_timepoints: scores.len(),
            covered: scores.covered(),
            uncovered,
            metrics,
            point_adjusted: adjust,
            scores: scores.scores.clone(),
            predictions,
            labels: labels.map(|l| l.to_vec()),
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// CSV rows `t,score,pred,label`; uncovered timepoints have an empty
    /// score field.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,score,pred,label")?;
        for t in 0..self.n_timepoints {
            let score = if self.scores[t].is_nan() {
                String::new()
            } else {
                format!("{}", self.scores[t])
            };
            let label = self
                .labels
                .as_ref()
                .map(|l| l[t].to_string())
                .unwrap_or_default();
            writeln!(out, "{t},{score},{},{label}", self.predictions[t])?;
        }
        out.flush()?;
        Ok(())
    }
}
