//! Sliding-window segmentation with floor semantics:
//! `k = floor((T - w) / l) + 1` windows; uncovered trailing points are
//! reported, never silently dropped.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct WindowSet<F: Scalar> {
    windows: Vec<Tensor<F>>,
    origins: Vec<usize>,
    window_size: usize,
    stride: usize,
    dims: usize,
    uncovered_tail: usize,
}

impl<F: Scalar> WindowSet<F> {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Start timepoint (0-based) of each window.
    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    /// Number of trailing timepoints not covered by any window.
    pub fn uncovered_tail(&self) -> usize {
        self.uncovered_tail
    }

    /// `[w, D]` window by index.
    pub fn get(&self, idx: usize) -> &Tensor<F> {
        &self.windows[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<F>> {
        self.windows.iter()
    }
}

/// Segment a `[T, D]` series into windows of `w` rows every `l` rows.
pub fn make_windows<F: Scalar>(values: &Tensor<F>, w: usize, l: usize) -> Result<WindowSet<F>> {
    if values.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            context: "make_windows".into(),
            expected: "[T, D]".into(),
            got: format!("{:?}", values.shape()),
        });
    }
    let t_len = values.shape()[0];
    let dims = values.shape()[1];
    if w == 0 || l == 0 {
        return Err(Error::Config("window size and stride must be positive".into()));
    }
    if w > t_len {
        return Err(Error::EmptyWindowSet { window: w, len: t_len });
    }
    let k = (t_len - w) / l + 1;
    let mut windows = Vec::with_capacity(k);
    let mut origins = Vec::with_capacity(k);
    for j in 0..k {
        let start = j * l;
        windows.push(values.rows(start, start + w));
        origins.push(start);
    }
    let covered_end = (k - 1) * l + w;
    Ok(WindowSet {
        windows,
        origins,
        window_size: w,
        stride: l,
        dims,
        uncovered_tail: t_len - covered_end,
    })
}
