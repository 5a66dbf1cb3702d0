//! Minimal reverse-mode differentiable tensor engine.
//!
//! Every trainable component in the crate is built on three pieces:
//!
//! * [`ParamStore`] owns named parameters and their gradient accumulators.
//! * [`Graph`] records a forward computation over [`Var`] handles and
//!   propagates gradients back into the store.
//! * [`Optimizer`] applies SGD or Adam updates to the store.
//!
//! All arrays are dense row-major matrices of `f64`. Vectors are `[1, n]`
//! rows and scalars are `[1, 1]`. A graph is built per batch and thrown
//! away after `backward`; only the store persists.

mod checkpoint;
mod graph;
mod optim;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointEntry, DType};
pub use graph::{Graph, Precision, Var};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{xavier_uniform, ParamId, ParamStore, Parameter};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss([usize; 2]),
    #[error("index out of range in {op}: {detail}")]
    Index { op: &'static str, detail: String },
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 2],
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(TensorError::Shape {
                op: "tensor",
                detail: format!("[{rows}, {cols}] needs {} values, got {}", rows * cols, data.len()),
            });
        }
        Ok(Self { shape: [rows, cols], data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { shape: [rows, cols], data: vec![0.0; rows * cols] }
    }

    pub fn scalar(v: f64) -> Self {
        Self { shape: [1, 1], data: vec![v] }
    }

    pub fn row(values: Vec<f64>) -> Self {
        Self { shape: [1, values.len()], data: values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(TensorError::Shape { op: "from_rows", detail: "ragged rows".into() });
        }
        Self::new(r, c, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    /// The single value of a `[1, 1]` tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }
}
