//! Per-dimension min-max normalization with statistics taken from the
//! training partition only; val/test are transformed with the same affine
//! map (values outside [0, 1] are permitted there).

use serde::{Deserialize, Serialize};

use super::series::SeriesDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Stored per-dimension (min, max) for the forward map and its inverse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    /// Dimensions that were constant on the training partition and mapped to
    /// 0.5 under the lenient policy.
    pub degenerate: Vec<usize>,
}

impl NormStats {
    /// Apply the stored map to a `[T, D]` tensor.
    pub fn apply<F: Scalar>(&self, values: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_dims(values)?;
        let d = self.mins.len();
        let mut out = values.clone();
        let data = out.data_mut();
        for (i, v) in data.iter_mut().enumerate() {
            let dim = i % d;
            if self.degenerate.contains(&dim) {
                *v = F::from_f64(0.5);
            } else {
                let lo = self.mins[dim];
                let hi = self.maxs[dim];
                *v = F::from_f64((v.into_f64() - lo) / (hi - lo));
            }
        }
        Ok(out)
    }

    /// Inverse map back to the original units. Degenerate dimensions map to
    /// their constant training value.
    pub fn invert<F: Scalar>(&self, values: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_dims(values)?;
        let d = self.mins.len();
        let mut out = values.clone();
        let data = out.data_mut();
        for (i, v) in data.iter_mut().enumerate() {
            let dim = i % d;
            if self.degenerate.contains(&dim) {
                *v = F::from_f64(self.mins[dim]);
            } else {
                let lo = self.mins[dim];
                let hi = self.maxs[dim];
                *v = F::from_f64(v.into_f64() * (hi - lo) + lo);
            }
        }
        Ok(out)
    }

    fn check_dims<F: Scalar>(&self, values: &Tensor<F>) -> Result<()> {
        if values.shape().len() != 2 || values.shape()[1] != self.mins.len() {
            return Err(Error::ShapeMismatch {
                context: "NormStats".into(),
                expected: format!("[T, {}]", self.mins.len()),
                got: format!("{:?}", values.shape()),
            });
        }
        Ok(())
    }
}

/// Normalize a dataset using training-partition statistics. With `strict`,
/// a constant training dimension is an error; otherwise the dimension is
/// mapped to 0.5 everywhere and a warning is logged.
pub fn normalize<F: Scalar>(dataset: &SeriesDataset<F>, strict: bool) -> Result<(SeriesDataset<F>, NormStats)> {
    let d = dataset.dims();
    let train_end = dataset.splits.train_end;
    let mut mins = vec![f64::INFINITY; d];
    let mut maxs = vec![f64::NEG_INFINITY; d];
    for t in 0..train_end {
        for dim in 0..d {
            let v = dataset.values.at2(t, dim).into_f64();
            mins[dim] = mins[dim].min(v);
            maxs[dim] = maxs[dim].max(v);
        }
    }
    let mut degenerate = Vec::new();
    for dim in 0..d {
        if maxs[dim] <= mins[dim] {
            if strict {
                return Err(Error::DegenerateDimension { dim });
            }
            log::warn!("dimension {dim} is constant over the training partition; mapping it to 0.5");
            degenerate.push(dim);
        }
    }
    let stats = NormStats {
        mins,
        maxs,
        degenerate,
    };
    let values = stats.apply(&dataset.values)?;
    Ok((
        SeriesDataset {
            name: dataset.name.clone(),
            values,
            labels: dataset.labels.clone(),
            splits: dataset.splits,
        },
        stats,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::series::SplitBounds;

    fn ds(values: Vec<f64>, d: usize, train_end: usize) -> SeriesDataset<f64> {
        let t = values.len() / d;
        SeriesDataset::new(
            "t",
            Tensor::new(vec![t, d], values).unwrap(),
            vec![0; t],
            SplitBounds {
                train_end,
                val_end: train_end,
            },
        )
        .unwrap()
    }

    #[test]
    fn three_point_column_maps_to_unit_range() {
        let d = ds(vec![1.0, 2.0, 3.0], 1, 3);
        let (n, stats) = normalize(&d, true).unwrap();
        assert_eq!(n.values.data(), &[0.0, 0.5, 1.0]);
        assert_eq!(stats.mins, vec![1.0]);
        assert_eq!(stats.maxs, vec![3.0]);
    }

    #[test]
    fn already_unit_range_unchanged() {
        let d = ds(vec![0.0, 1.0, 0.25], 1, 3);
        let (n, _) = normalize(&d, true).unwrap();
        assert_eq!(n.values.data(), &[0.0, 1.0, 0.25]);
    }

    #[test]
    fn test_values_extend_beyond_unit_interval() {
        // train column [0, 10], test value 20 -> 2.0
        let d = ds(vec![0.0, 10.0, 20.0], 1, 2);
        let (n, _) = normalize(&d, true).unwrap();
        assert_eq!(n.values.data()[2], 2.0);
    }

    #[test]
    fn idempotent_on_training_partition() {
        let d = ds(vec![3.0, 9.0, 6.0, 4.5], 1, 4);
        let (n1, _) = normalize(&d, true).unwrap();
        let (n2, _) = normalize(&n1, true).unwrap();
        for (a, b) in n1.values.data().iter().zip(n2.values.data().iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_dimension_strict_errors_lenient_maps_to_half() {
        let d = ds(vec![2.0, 2.0, 2.0], 1, 3);
        assert!(matches!(
            normalize(&d, true),
            Err(Error::DegenerateDimension { dim: 0 })
        ));
        let (n, stats) = normalize(&d, false).unwrap();
        assert_eq!(n.values.data(), &[0.5, 0.5, 0.5]);
        assert_eq!(stats.degenerate, vec![0]);
    }

    #[test]
    fn inverse_roundtrip() {
        let d = ds(vec![3.0, 9.0, 6.0, 12.0], 2, 2);
        let (n, stats) = normalize(&d, true).unwrap();
        let back = stats.invert(&n.values).unwrap();
        for (a, b) in back.data().iter().zip(d.values.data().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
