//! Shared-private domain adaptation.
//!
//! A shared encoder and one private encoder per domain feed a single
//! parsing head. The shared encoder is pushed towards domain invariance by a
//! gradient-reversed domain classifier and kept apart from the private
//! encoders by an orthogonality penalty. Two variants combine the private
//! encoders across domains: learned fusion coefficients, and feature
//! matching from the source encoder (teacher) to each target encoder
//! (student). Domain 0 is always the source.

mod losses;
mod model;
mod sampler;
mod train;

pub use losses::{
    domain_classifier_loss, init_fusion_logits, orthogonality_loss, AdvWarmup, DomainClassifier, FusionCoefficients, MatchingNetwork,
};
pub use model::{total_loss, DaMode, LossParts, LossWeights, Representation, SharedPrivateModel};
pub use sampler::{balanced_batch_sampler, BalancedSampler};
pub use train::{evaluate_domain, train_shared_private, DaConfig};

use thiserror::Error;

use crate::chart::ChartError;
use crate::encoder::EncoderError;
use crate::metrics::MetricsError;
use crate::multilingual::MultilingualError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("batch size {batch_size} is not a positive multiple of {domains} domains")]
    BatchSize { batch_size: usize, domains: usize },
    #[error("domain {0} has no training data")]
    EmptyDomain(usize),
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("mode mismatch: {0}")]
    ModeMismatch(String),
    #[error("source domain has no dev set for early stopping")]
    NoDev,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Multilingual(#[from] MultilingualError),
}

pub type Result<T> = std::result::Result<T, AdaptError>;
