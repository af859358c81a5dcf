//! Labeled multivariate series with contiguous train/val/test partitions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Partition boundaries: train = `0..train_end`, val = `train_end..val_end`,
/// test = `val_end..T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBounds {
    pub train_end: usize,
    pub val_end: usize,
}

impl SplitBounds {
    /// 2:1:2 split (integer rounding; the test partition takes the slack).
    pub fn ratio_2_1_2(t_len: usize) -> Self {
        let train_end = (t_len as f64 * 0.4).round() as usize;
        let val_end = train_end + (t_len as f64 * 0.2).round() as usize;
        Self {
            train_end,
            val_end: val_end.min(t_len),
        }
    }

    pub fn validate(&self, t_len: usize) -> Result<()> {
        if self.train_end == 0 || self.train_end > self.val_end || self.val_end > t_len {
            return Err(Error::Config(format!(
                "invalid split bounds {self:?} for length {t_len}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug)]
pub struct SeriesDataset<F: Scalar> {
    pub name: String,
    /// `[T, D]` values.
    pub values: Tensor<F>,
    /// Per-timepoint binary labels, length `T`.
    pub labels: Vec<u8>,
    pub splits: SplitBounds,
}

impl<F: Scalar> SeriesDataset<F> {
    pub fn new(name: &str, values: Tensor<F>, labels: Vec<u8>, splits: SplitBounds) -> Result<Self> {
        if values.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                context: "SeriesDataset".into(),
                expected: "[T, D]".into(),
                got: format!("{:?}", values.shape()),
            });
        }
        let t_len = values.shape()[0];
        if labels.len() != t_len {
            return Err(Error::Config(format!(
                "labels length {} != series length {t_len}",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|l| **l > 1) {
            return Err(Error::Config(format!("non-binary label {bad}")));
        }
        splits.validate(t_len)?;
        Ok(Self {
            name: name.to_string(),
            values,
            labels,
            splits,
        })
    }

    pub fn t_len(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn dims(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn split_range(&self, split: Split) -> std::ops::Range<usize> {
        match split {
            Split::Train => 0..self.splits.train_end,
            Split::Val => self.splits.train_end..self.splits.val_end,
            Split::Test => self.splits.val_end..self.t_len(),
        }
    }

    /// Values of one partition as an owned `[len, D]` tensor plus its labels
    /// and absolute start index.
    pub fn split_slice(&self, split: Split) -> (Tensor<F>, &[u8], usize) {
        let r = self.split_range(split);
        (
            self.values.rows(r.start, r.end),
            &self.labels[r.clone()],
            r.start,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_ratio_within_one_point() {
        for t in [10usize, 999, 2000, 50_000, 12_345] {
            let s = SplitBounds::ratio_2_1_2(t);
            let train = s.train_end as f64;
            let val = (s.val_end - s.train_end) as f64;
            let test = (t - s.val_end) as f64;
            assert!((train - 0.4 * t as f64).abs() <= 1.0, "t={t}");
            assert!((val - 0.2 * t as f64).abs() <= 1.0, "t={t}");
            assert!((test - 0.4 * t as f64).abs() <= 1.5, "t={t}");
        }
    }

    #[test]
    fn partitions_are_contiguous_and_cover() {
        let t = 100;
        let values = Tensor::<f32>::zeros(&[t, 2]);
        let ds = SeriesDataset::new("x", values, vec![0; t], SplitBounds::ratio_2_1_2(t)).unwrap();
        let a = ds.split_range(Split::Train);
        let b = ds.split_range(Split::Val);
        let c = ds.split_range(Split::Test);
        assert_eq!(a.end, b.start);
        assert_eq!(b.end, c.start);
        assert_eq!(c.end, t);
    }

    #[test]
    fn non_binary_labels_rejected() {
        let values = Tensor::<f32>::zeros(&[3, 1]);
        let err = SeriesDataset::new("x", values, vec![0, 2, 0], SplitBounds::ratio_2_1_2(3));
        assert!(err.is_err());
    }
}
