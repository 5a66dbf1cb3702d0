use std::collections::BTreeMap;

use rand::Rng;

use super::{Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
    pub trainable: bool,
}

/// Named parameter container. Insertion order is the canonical order used
/// by optimizers and checkpoints.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(TensorError::DuplicateParam(name));
        }
        let id = ParamId(self.params.len());
        let grad = vec![0.0; value.data().len()];
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter { name, value, grad, trainable: true });
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].grad
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Grows a parameter by appending rows, used when a vocabulary is
    /// extended after training.
    pub fn append_rows(&mut self, id: ParamId, rows: &[Vec<f64>]) -> Result<()> {
        let p = &mut self.params[id.0];
        let cols = p.value.cols();
        let mut data = p.value.data().to_vec();
        for r in rows {
            if r.len() != cols {
                return Err(TensorError::Shape { op: "append_rows", detail: format!("row of length {} for {} columns", r.len(), cols) });
            }
            data.extend_from_slice(r);
        }
        let n = data.len() / cols.max(1);
        p.value = Tensor::new(n, cols, data)?;
        p.grad = vec![0.0; p.value.data().len()];
        Ok(())
    }

    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) {
        assert_eq!(snapshot.len(), self.params.len(), "snapshot from a different model");
        for (p, v) in self.params.iter_mut().zip(snapshot) {
            p.value = v.clone();
            p.grad = vec![0.0; v.data().len()];
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params.iter().filter(|p| p.trainable).flat_map(|p| p.grad.iter()).map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Uniform in ±sqrt(6 / (fan_in + fan_out)).
pub fn xavier_uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor { shape: [rows, cols], data }
}
