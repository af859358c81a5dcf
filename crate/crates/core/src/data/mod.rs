//! Synthetic benchmark generation, normalization, sliding windows, splits
//! and dataset file I/O.

pub mod io;
pub mod normalize;
pub mod series;
pub mod synth;
pub mod windows;

pub use io::{load_dataset, save_dataset, sidecar_path, DatasetMeta};
pub use normalize::{normalize, NormStats};
pub use series::{SeriesDataset, Split, SplitBounds};
pub use synth::{generate_synthetic, AnomalyKind, AnomalySpec};
pub use windows::{make_windows, WindowSet};
