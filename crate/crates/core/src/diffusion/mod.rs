//! Forward diffusion, noise schedules, the U-Net denoiser and the composed
//! denoising module, plus the fixed-step partial-diffusion baseline.

pub mod denoise;
pub mod schedule;
pub mod train;
pub mod unet;

pub use denoise::{
    denoise_module, denoise_module_t, denoise_step, partial_diffusion_reconstruct, DenoiseVariant,
    NoisePredictor, OracleNoise, TrueNoiseOracle,
};
pub use schedule::{forward_sample, NoiseSchedule, ScheduleShape};
pub use train::{train_denoiser, DenoiserTrainOptions, EpochLoss, FrozenDenoiser, TrainedDenoiser};
pub use unet::{unet_forward, unet_predict, DenoiserConfig, UNet};
