//! One shared encoder, one parsing module per language.
//!
//! Every language keeps its own label set, tag set, span scorer and PoS
//! classifier; only the encoder and the word vocabulary are shared. Training
//! draws monolingual batches from a mixing schedule and stops early on the
//! main language's dev F1.

mod model;
mod stream;
mod train;

pub use model::{ModelConfig, MultilingualParser};
pub use stream::{joint_batch_stream, JointBatchStream, MixingSchedule, MixingStrategy};
pub use train::{evaluate_language, evaluate_trees, fine_tune, train_joint, EarlyStopping, EpochLog, TrainConfig, TrainLog};

use thiserror::Error;

use crate::chart::ChartError;
use crate::encoder::EncoderError;
use crate::metrics::MetricsError;
use crate::tensor::TensorError;
use crate::treebank::Tree;

#[derive(Debug, Error)]
pub enum MultilingualError {
    #[error("empty training set for {0}")]
    EmptyTrain(String),
    #[error("unknown language `{0}`")]
    UnknownLanguage(String),
    #[error("language `{0}` has no dev set for early stopping")]
    NoDev(String),
    #[error("invalid training setup: {0}")]
    Config(String),
    #[error("model metadata: {0}")]
    Meta(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MultilingualError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// A language (or domain) with its treebank splits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LanguageSpec {
    pub name: String,
    pub train: Vec<Tree>,
    pub dev: Vec<Tree>,
    pub test: Vec<Tree>,
}

impl LanguageSpec {
    pub fn new(name: impl Into<String>, train: Vec<Tree>, dev: Vec<Tree>, test: Vec<Tree>) -> Self {
        Self { name: name.into(), train, dev, test }
    }

    pub fn split(&self, split: Split) -> &[Tree] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}
