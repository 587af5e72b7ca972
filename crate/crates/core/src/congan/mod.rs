//! Class-conditional residual GAN with hand-written backward passes.
//!
//! Generator: hierarchical latent input, residual up-blocks with conditional
//! batch norm, one self-attention layer, tanh output. Discriminator: spectrally
//! normalized residual down-blocks, self-attention, projection head and an
//! auxiliary classifier. Trained with hinge + cross-entropy losses and Adam.
//! All math is f64; checkpoints store f32.

mod adam;
mod attention;
mod blocks;
mod checkpoint;
mod config;
mod gan;
pub mod gradcheck;
pub mod layers;
mod loss;
mod networks;
mod param;
pub mod spectral;
mod tensor;

pub use adam::{adam_step, Adam, AdamConfig};
pub use attention::SelfAttention;
pub use blocks::{DBlock, GBlock};
pub use checkpoint::{Checkpoint, NamedTensor};
pub use config::{GanConfig, IterationPlan};
pub use gan::{
    generate, interpolate, sample_latent, save_images, train, EpochMetrics, Gan, TrainOptions, TrainingSet,
    FINAL_CHECKPOINT, METRICS_HEADER,
};
pub use gradcheck::{grad_check_all, LayerGradReport};
pub use layers::Mode;
pub use loss::{accuracy, cross_entropy, d_loss, g_loss, losses, DLoss, GLoss};
pub use networks::{DOutput, Discriminator, Generator};
pub use param::{Module, Param};
pub use spectral::{power_iterate, spectral_norm_apply, SpectralNorm};
pub use tensor::{gemm, Tensor4};
