//! Minimal differentiable kernels for the denoiser.

pub mod adam;
pub mod embed;
pub mod gradcheck;
pub mod kernels;
pub mod layer;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use embed::{sinusoid_embed, style_bucket, style_embed};
pub use gradcheck::grad_check;
pub use layer::{backward, forward, Cache, Layer, LayerSpec};
pub use tensor::Tensor;
