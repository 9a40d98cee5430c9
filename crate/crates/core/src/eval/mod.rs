//! Realism metrics, discriminators and evaluation protocols.

pub mod accel;
pub mod classify;
pub mod embed;
pub mod features;
pub mod metrics;
pub mod protocol;

pub use accel::{accel_direction_stats, AccelStats, HistBin};
pub use classify::{
    binary_metrics, fit, train_discriminator, BinaryMetrics, Discriminator, DiscriminatorConfig, DiscriminatorKind,
};
pub use embed::{embed_2d, EmbedConfig, EmbedMethod};
pub use features::{extract_all, extract_features, mean_features, FeatureVec, FEATURE_DIM, FEATURE_NAMES};
pub use metrics::{cos_sim, emd, jsd, mse_rmse, pair_by_task, wasserstein_1d, EmdConfig, JsdConfig};
pub use protocol::{
    protocol_independent, protocol_unified, Corpus, DiscriminatorScore, EmbeddedPoint, EvalConfig, EvalOutcome,
    EvalReport, ProtocolKind, ProtocolSplit,
};
