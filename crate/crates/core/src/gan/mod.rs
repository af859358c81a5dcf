//! Generator/discriminator controller: the generator replaces the analytic
//! forward noising, the discriminator's probability selects the denoising
//! step count, and both train jointly against a frozen denoiser.

pub mod discriminator;
pub mod generator;
pub mod losses;
pub mod mapper;
pub mod train;

pub use discriminator::{Discriminator, DiscriminatorConfig, TrainedDiscriminator, LOGIT_BOUND};
pub use generator::{Generator, GeneratorConfig, TrainedGenerator};
pub use losses::{
    adversarial_losses, discriminator_adv_loss, generator_adv_loss, reconstruction_loss,
    window_reconstruction_loss, window_reconstruction_loss_soft, LOG_FLOOR,
};
pub use mapper::{StepMapper, StepMapperKind};
pub use train::{train_gan, GanEpochStats, GanTrainOptions};
