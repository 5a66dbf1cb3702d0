//! Synthetic data, data splits and the experiment runners.

mod config;
mod pcfg;
mod runners;
mod splits;

pub use config::{ExperimentConfig, Mode};
pub use pcfg::{builtin_grammar, builtin_suite, synth_generate, Pcfg};
pub use runners::{
    da_domains, fold_language, read_report_summary, read_treebank, run_combined, run_crossval, run_experiment, run_finetune, run_zero_shot,
    source_model, write_reports, ExperimentData, ReportSet,
};
pub use splits::{make_folds, resample, FoldPlan, Folds, ResamplePlan, Split};

use std::path::PathBuf;

use thiserror::Error;

use crate::adapt::AdaptError;
use crate::metrics::MetricsError;
use crate::multilingual::MultilingualError;
use crate::treebank::TreebankError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("grammar line {line}: {msg}")]
    Grammar { line: usize, msg: String },
    #[error("grammar does not terminate: expected tree size diverges")]
    NotFinite,
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("no tree within {0} tokens after repeated sampling")]
    LengthCap(usize),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("{size} items, need at least {needed}")]
    TooSmall { size: usize, needed: usize },
    #[error("{0}")]
    Plan(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Treebank(#[from] TreebankError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Multilingual(#[from] MultilingualError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;
