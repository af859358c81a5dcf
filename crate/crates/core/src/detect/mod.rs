//! Anomaly scoring, threshold selection, binary labeling and evaluation.

pub mod metrics;
pub mod report;
pub mod score;
pub mod threshold;

pub use metrics::{evaluate, point_adjust, Metrics};
pub use report::{DetectionReport, REPORT_FORMAT_VERSION};
pub use score::{detection_origins, score_with, Aggregation, ScoreSeries};
pub use threshold::{best_f1_threshold, quantile_threshold, select_threshold, ThresholdStrategy};
