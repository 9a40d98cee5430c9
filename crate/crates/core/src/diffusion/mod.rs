//! Complexity-conditioned DDIM over fixed-length trajectory buffers.

pub mod frame;
pub mod loss;
pub mod process;
pub mod schedule;
pub mod train;
pub mod unet;

pub use frame::TaskFrame;
pub use loss::{loss_ddim, loss_sim, loss_style, total_loss, LossWeights};
pub use process::{denoise_step, q_sample, sample, sample_batch, DiffusionModel, SampleOutcome, SamplerConfig};
pub use schedule::{timesteps, NoiseSchedule, ScheduleKind, Spacing};
pub use train::{train, EpochLoss, TrainConfig, TrainReport};
pub use unet::{Denoiser, DenoiserConfig};
