//! Point-wise precision / recall / F1 with the usual zero-denominator
//! conventions, plus the optional point-adjustment transform (off by default
//! in every pipeline here).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Confusion counts and derived metrics. Conventions: P = 0 when TP+FP = 0,
/// R = 0 when TP+FN = 0, F1 = 0 when P+R = 0.
pub fn evaluate(predicted: &[u8], truth: &[u8]) -> Result<Metrics> {
    if predicted.len() != truth.len() {
        return Err(Error::Config(format!(
            "prediction length {} != label length {}",
            predicted.len(),
            truth.len()
        )));
    }
    let mut m = Metrics::default();
    for (p, y) in predicted.iter().zip(truth.iter()) {
        if *p > 1 || *y > 1 {
            return Err(Error::Config(format!("non-binary entry (pred {p}, label {y})")));
        }
        match (p, y) {
            (1, 1) => m.tp += 1,
            (1, 0) => m.fp += 1,
            (0, 1) => m.fn_ += 1,
            _ => m.tn += 1,
        }
    }
    m.precision = if m.tp + m.fp == 0 {
        0.0
    } else {
        m.tp as f64 / (m.tp + m.fp) as f64
    };
    m.recall = if m.tp + m.fn_ == 0 {
        0.0
    } else {
        m.tp as f64 / (m.tp + m.fn_) as f64
    };
    m.f1 = if m.precision + m.recall == 0.0 {
        0.0
    } else {
        2.0 * m.precision * m.recall / (m.precision + m.recall)
    };
    Ok(m)
}

/// Point adjustment: any hit inside a contiguous true-anomaly segment marks
/// the whole segment as detected.
pub fn point_adjust(predicted: &[u8], truth: &[u8]) -> Vec<u8> {
    let mut adjusted = predicted.to_vec();
    let n = truth.len();
    let mut i = 0usize;
    while i < n {
        if truth[i] == 1 {
            let start = i;
            while i < n && truth[i] == 1 {
                i += 1;
            }
            if predicted[start..i].iter().any(|p| *p == 1) {
                for a in &mut adjusted[start..i] {
                    *a = 1;
                }
            }
        } else {
            i += 1;
        }
    }
    adjusted
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_formula_case() {
        // TP=2, FP=1, FN=1 -> P = R = F1 = 2/3
        let m = evaluate(&[1, 1, 1, 0, 0], &[1, 1, 0, 1, 0]).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (2, 1, 1, 1));
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction() {
        let y = [0, 1, 1, 0, 1];
        let m = evaluate(&y, &y).unwrap();
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.f1, 1.0);
    }

    #[test]
    fn zero_conventions() {
        let m = evaluate(&[0, 0, 0], &[0, 1, 1]).unwrap();
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn length_mismatch_and_non_binary_rejected() {
        assert!(evaluate(&[0, 1], &[0]).is_err());
        assert!(evaluate(&[2], &[0]).is_err());
        assert!(evaluate(&[0], &[5]).is_err());
    }

    #[test]
    fn exhaustive_against_brute_force_length8() {
        // all 2^8 x 2^8 binary pairs against a naive counter
        for a in 0u16..256 {
            for b in 0u16..256 {
                let pred: Vec<u8> = (0..8).map(|i| ((a >> i) & 1) as u8).collect();
                let truth: Vec<u8> = (0..8).map(|i| ((b >> i) & 1) as u8).collect();
                let m = evaluate(&pred, &truth).unwrap();
                let mut tp = 0;
                let mut fp = 0;
                let mut fn_ = 0;
                for i in 0..8 {
                    match (pred[i], truth[i]) {
                        (1, 1) => tp += 1,
                        (1, 0) => fp += 1,
                        (0, 1) => fn_ += 1,
                        _ => {}
                    }
                }
                assert_eq!((m.tp, m.fp, m.fn_), (tp, fp, fn_));
                let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
                let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
                let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
                assert!((m.f1 - f1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn point_adjust_marks_whole_segment() {
        let truth = [0, 1, 1, 1, 0, 1, 1, 0];
        let pred = [0, 0, 1, 0, 0, 0, 0, 0];
        let adj = point_adjust(&pred, &truth);
        assert_eq!(adj, vec![0, 1, 1, 1, 0, 0, 0, 0]);
    }
}
