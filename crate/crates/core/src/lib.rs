//! Multivariate time-series anomaly detection built around a partial
//! diffusion reconstructor whose noising step count is chosen per sample by
//! a generator/discriminator pair, plus the fixed-step baseline and a
//! synthetic benchmark generator.
//!
//! Numeric code is generic over the scalar type ([`scalar::Scalar`]):
//! training and inference run in `f32`, gradient verification in `f64`.
//! Concrete aliases for the common types live at the crate root.

pub mod bundle;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod detect;
pub mod diffusion;
pub mod error;
pub mod experiment;
pub mod gan;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::{sample_gaussian, RngStream};
pub use scalar::Scalar;

/// Production-precision aliases (training and inference run in f32).
pub type Tensor32 = tensor::Tensor<f32>;
pub type ParameterSet32 = params::ParameterSet<f32>;
pub type GradientMap32 = params::GradientMap<f32>;
pub type SeriesDataset32 = data::SeriesDataset<f32>;
pub type TrainedDenoiser32 = diffusion::TrainedDenoiser<f32>;
pub type Generator32 = gan::Generator<f32>;
pub type Discriminator32 = gan::Discriminator<f32>;
pub type ModelBundle32 = bundle::ModelBundle<f32>;

/// Double-precision aliases (finite-difference checks and oracles).
pub type Tensor64 = tensor::Tensor<f64>;
pub type ParameterSet64 = params::ParameterSet<f64>;
