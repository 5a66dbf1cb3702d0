use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ParamId, ParamStore, Result, Tensor, TensorError};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Storage precision for forward values.
///
/// `F32` rounds every op output to single precision; accumulation and
/// gradients stay in `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Embedding { param: ParamId, ids: Vec<usize> },
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    ScaleBy { scalar: Var, x: Var },
    DivBy { x: Var, scalar: Var },
    Relu(Var),
    Sigmoid(Var),
    Square(Var),
    Softmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    GatherRows { x: Var, idx: Vec<usize> },
    Pick { x: Var, r: usize, c: usize },
    SelectSum { x: Var, entries: Vec<(usize, usize)> },
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    SquaredFrobenius(Var),
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Vec<f64>, count: usize },
    Grl { x: Var, lambda: f64 },
    Dropout { x: Var, mask: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Tape of forward operations for one batch.
#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    precision: Precision,
    rng: Option<ChaCha8Rng>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, detail: String) -> TensorError {
    TensorError::Shape { op, detail }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

// dy [m×n] · bᵀ where b is [k×n] -> [m×k]
fn matmul_a_bt(dy: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let drow = &dy[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = drow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

// aᵀ · dy where a is [m×k], dy [m×n] -> [k×n]
fn matmul_at_b(a: &[f64], dy: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let drow = &dy[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, d) in orow.iter_mut().zip(drow) {
                *o += av * d;
            }
        }
    }
    out
}

fn add_into(dst: &mut Option<Vec<f64>>, src: &[f64]) {
    match dst {
        Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src.to_vec()),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new(), precision: Precision::F64, rng: None }
    }

    pub fn with_precision(precision: Precision) -> Self {
        Self { precision, ..Self::new() }
    }

    /// Enables dropout, drawing masks from the given generator.
    pub fn train_mode(mut self, rng: ChaCha8Rng) -> Self {
        self.rng = Some(rng);
        self
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    /// Hands back the dropout generator so the caller can continue the stream.
    pub fn take_rng(&mut self) -> Option<ChaCha8Rng> {
        self.rng.take()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape
    }

    /// Gradient of the last `backward` loss with respect to `v`, zeros if
    /// `v` was unreachable.
    pub fn grad(&self, v: Var) -> Vec<f64> {
        self.grads.get(v.0).and_then(|g| g.clone()).unwrap_or_else(|| vec![0.0; self.nodes[v.0].value.data.len()])
    }

    fn push(&mut self, op_name: &'static str, mut value: Tensor, op: Op) -> Result<Var> {
        if self.precision == Precision::F32 {
            value.data.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
        if value.data.iter().any(|x| !x.is_finite()) {
            return Err(TensorError::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn v(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn expect_scalar(&self, op: &'static str, s: Var) -> Result<f64> {
        let t = self.v(s);
        if t.shape != [1, 1] {
            return Err(shape_err(op, format!("expected scalar, got {:?}", t.shape)));
        }
        Ok(t.data[0])
    }

    // ---- leaves ----------------------------------------------------------

    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        self.push("leaf", value, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        self.push("param", store.value(id).clone(), Op::Param(id))
    }

    /// Same values as `x`, cut off from the gradient flow.
    pub fn detach(&mut self, x: Var) -> Result<Var> {
        let value = self.v(x).clone();
        self.push("detach", value, Op::Leaf)
    }

    /// Gathers rows of an embedding parameter without copying the table.
    pub fn embedding(&mut self, store: &ParamStore, id: ParamId, ids: &[usize]) -> Result<Var> {
        let table = store.value(id);
        let cols = table.cols();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            if i >= table.rows() {
                return Err(TensorError::Index { op: "embedding", detail: format!("id {i} in table of {} rows", table.rows()) });
            }
            data.extend_from_slice(table.row_slice(i));
        }
        let value = Tensor::new(ids.len(), cols, data)?;
        self.push("embedding", value, Op::Embedding { param: id, ids: ids.to_vec() })
    }

    // ---- linear algebra ----------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ([m, k], [k2, n]) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(shape_err("matmul", format!("[{m}, {k}] x [{k2}, {n}]")));
        }
        let data = matmul_raw(&self.v(a).data, &self.v(b).data, m, k, n);
        self.push("matmul", Tensor { shape: [m, n], data }, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let [r, c] = self.shape(a);
        let src = &self.v(a).data;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        self.push("transpose", Tensor { shape: [c, r], data }, Op::Transpose(a))
    }

    // ---- elementwise -------------------------------------------------------

    fn zip_with(&mut self, name: &'static str, a: Var, b: Var, f: fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let data = self.v(a).data.iter().zip(&self.v(b).data).map(|(x, y)| f(*x, *y)).collect();
        let shape = self.shape(a);
        self.push(name, Tensor { shape, data }, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn row_broadcast(&mut self, name: &'static str, a: Var, row: Var, f: fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let ([r, c], rs) = (self.shape(a), self.shape(row));
        if rs != [1, c] {
            return Err(shape_err(name, format!("[{r}, {c}] with row {rs:?}")));
        }
        let rv = &self.v(row).data;
        let data = self.v(a).data.iter().enumerate().map(|(i, x)| f(*x, rv[i % c])).collect();
        self.push(name, Tensor { shape: [r, c], data }, op)
    }

    /// Adds a `[1, c]` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_broadcast("add_row", a, row, |x, y| x + y, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by a `[1, c]` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_broadcast("mul_row", a, row, |x, y| x * y, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let value = Tensor { shape: self.shape(a), data: self.v(a).data.iter().map(|x| x * k).collect() };
        self.push("scale", value, Op::Scale(a, k))
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Result<Var> {
        let value = Tensor { shape: self.shape(a), data: self.v(a).data.iter().map(|x| x + k).collect() };
        self.push("add_const", value, Op::AddConst(a))
    }

    /// Multiplies `x` by a scalar node.
    pub fn scale_by(&mut self, scalar: Var, x: Var) -> Result<Var> {
        let s = self.expect_scalar("scale_by", scalar)?;
        let value = Tensor { shape: self.shape(x), data: self.v(x).data.iter().map(|v| v * s).collect() };
        self.push("scale_by", value, Op::ScaleBy { scalar, x })
    }

    /// Divides `x` by a scalar node.
    pub fn div_by(&mut self, x: Var, scalar: Var) -> Result<Var> {
        let s = self.expect_scalar("div_by", scalar)?;
        let value = Tensor { shape: self.shape(x), data: self.v(x).data.iter().map(|v| v / s).collect() };
        self.push("div_by", value, Op::DivBy { x, scalar })
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = Tensor { shape: self.shape(a), data: self.v(a).data.iter().map(|x| x.max(0.0)).collect() };
        self.push("relu", value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let data = self.v(a).data.iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        self.push("sigmoid", Tensor { shape: self.shape(a), data }, Op::Sigmoid(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let value = Tensor { shape: self.shape(a), data: self.v(a).data.iter().map(|x| x * x).collect() };
        self.push("square", value, Op::Square(a))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let [r, c] = self.shape(a);
        let src = &self.v(a).data;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out = &mut data[i * c..(i + 1) * c];
            let mut z = 0.0;
            for (o, x) in out.iter_mut().zip(row) {
                *o = (x - max).exp();
                z += *o;
            }
            out.iter_mut().for_each(|o| *o /= z);
        }
        self.push("softmax", Tensor { shape: [r, c], data }, Op::Softmax(a))
    }

    /// Layer normalization over the last axis with `[1, c]` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        const EPS: f64 = 1e-5;
        let [r, c] = self.shape(x);
        if self.shape(gamma) != [1, c] || self.shape(beta) != [1, c] {
            return Err(shape_err("layer_norm", format!("input [{r}, {c}] with gain {:?} bias {:?}", self.shape(gamma), self.shape(beta))));
        }
        let src = &self.v(x).data;
        let (g, b) = (&self.v(gamma).data, &self.v(beta).data);
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + EPS).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                let h = (row[j] - mean) * is;
                xhat[i * c + j] = h;
                data[i * c + j] = h * g[j] + b[j];
            }
        }
        self.push("layer_norm", Tensor { shape: [r, c], data }, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    // ---- structure ---------------------------------------------------------

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map(|p| self.shape(*p)[0]).unwrap_or(0);
        if parts.is_empty() || parts.iter().any(|p| self.shape(*p)[0] != rows) {
            let shapes: Vec<_> = parts.iter().map(|p| self.shape(*p)).collect();
            return Err(shape_err("concat_cols", format!("{shapes:?}")));
        }
        let total: usize = parts.iter().map(|p| self.shape(*p)[1]).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.v(*p).row_slice(r));
            }
        }
        self.push("concat_cols", Tensor { shape: [rows, total], data }, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts.first().map(|p| self.shape(*p)[1]).unwrap_or(0);
        if parts.is_empty() || parts.iter().any(|p| self.shape(*p)[1] != cols) {
            let shapes: Vec<_> = parts.iter().map(|p| self.shape(*p)).collect();
            return Err(shape_err("concat_rows", format!("{shapes:?}")));
        }
        let mut data = Vec::new();
        for p in parts {
            data.extend_from_slice(&self.v(*p).data);
        }
        let rows = data.len() / cols.max(1);
        self.push("concat_rows", Tensor { shape: [rows, cols], data }, Op::ConcatRows(parts.to_vec()))
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let [r, c] = self.shape(x);
        if start >= end || end > c {
            return Err(shape_err("slice_cols", format!("{start}..{end} of {c} columns")));
        }
        let src = &self.v(x).data;
        let mut data = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            data.extend_from_slice(&src[i * c + start..i * c + end]);
        }
        self.push("slice_cols", Tensor { shape: [r, end - start], data }, Op::SliceCols { x, start })
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let [r, c] = self.shape(x);
        if let Some(bad) = idx.iter().find(|&&i| i >= r) {
            return Err(TensorError::Index { op: "gather_rows", detail: format!("row {bad} of {r}") });
        }
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(self.v(x).row_slice(i));
        }
        self.push("gather_rows", Tensor { shape: [idx.len(), c], data }, Op::GatherRows { x, idx: idx.to_vec() })
    }

    /// Single element as a scalar node.
    pub fn pick(&mut self, x: Var, r: usize, c: usize) -> Result<Var> {
        let [rows, cols] = self.shape(x);
        if r >= rows || c >= cols {
            return Err(TensorError::Index { op: "pick", detail: format!("({r}, {c}) of [{rows}, {cols}]") });
        }
        let v = self.v(x).get(r, c);
        self.push("pick", Tensor::scalar(v), Op::Pick { x, r, c })
    }

    /// Sum of the listed `(row, col)` entries; repeats count repeatedly.
    pub fn select_sum(&mut self, x: Var, entries: &[(usize, usize)]) -> Result<Var> {
        let [rows, cols] = self.shape(x);
        let mut s = 0.0;
        for &(r, c) in entries {
            if r >= rows || c >= cols {
                return Err(TensorError::Index { op: "select_sum", detail: format!("({r}, {c}) of [{rows}, {cols}]") });
            }
            s += self.v(x).get(r, c);
        }
        self.push("select_sum", Tensor::scalar(s), Op::SelectSum { x, entries: entries.to_vec() })
    }

    // ---- reductions --------------------------------------------------------

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.v(a).data.iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.v(a);
        let s = t.data.iter().sum::<f64>() / t.data.len().max(1) as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean(a))
    }

    /// Column means, `[r, c] -> [1, c]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let [r, c] = self.shape(a);
        if r == 0 {
            return Err(shape_err("mean_rows", "zero rows".into()));
        }
        let mut data = vec![0.0; c];
        for i in 0..r {
            for (d, x) in data.iter_mut().zip(self.v(a).row_slice(i)) {
                *d += x;
            }
        }
        data.iter_mut().for_each(|d| *d /= r as f64);
        self.push("mean_rows", Tensor { shape: [1, c], data }, Op::MeanRows(a))
    }

    pub fn squared_frobenius(&mut self, a: Var) -> Result<Var> {
        let s = self.v(a).data.iter().map(|x| x * x).sum();
        self.push("squared_frobenius", Tensor::scalar(s), Op::SquaredFrobenius(a))
    }

    /// Mean cross-entropy of row-wise logits against targets; `None`
    /// targets are skipped. Returns 0 when every target is skipped.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let [r, c] = self.shape(logits);
        if targets.len() != r {
            return Err(shape_err("cross_entropy", format!("{} targets for {r} rows", targets.len())));
        }
        let src = &self.v(logits).data;
        let mut probs = vec![0.0; r * c];
        let mut loss = 0.0;
        let mut count = 0;
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let log_z = max + z.ln();
            for j in 0..c {
                probs[i * c + j] = (row[j] - log_z).exp();
            }
            if let Some(t) = targets[i] {
                if t >= c {
                    return Err(TensorError::Index { op: "cross_entropy", detail: format!("target {t} of {c} classes") });
                }
                loss += log_z - row[t];
                count += 1;
            }
        }
        let value = if count > 0 { loss / count as f64 } else { 0.0 };
        self.push("cross_entropy", Tensor::scalar(value), Op::CrossEntropy { logits, targets: targets.to_vec(), probs, count })
    }

    // ---- gradient control --------------------------------------------------

    /// Identity forward; multiplies the incoming gradient by `-lambda`.
    pub fn grl(&mut self, x: Var, lambda: f64) -> Result<Var> {
        let value = self.v(x).clone();
        self.push("grl", value, Op::Grl { x, lambda })
    }

    /// Inverted dropout. Identity when the graph is not in training mode.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        if rate <= 0.0 {
            return Ok(x);
        }
        let Some(rng) = self.rng.as_mut() else { return Ok(x) };
        let keep = 1.0 - rate;
        let n = self.nodes[x.0].value.data.len();
        let mask: Vec<f64> = (0..n).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        let data = self.v(x).data.iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = self.shape(x);
        self.push("dropout", Tensor { shape, data }, Op::Dropout { x, mask })
    }

    // ---- backward ----------------------------------------------------------

    /// Back-propagates from a scalar loss. Gradients for every node are kept
    /// for [`Graph::grad`] and parameter gradients are added to `store`.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(TensorError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = &node.value;
            let [r, c] = y.shape;
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    let p = store.get_mut(*id);
                    p.grad.iter_mut().zip(&dy).for_each(|(g, d)| *g += d);
                }
                Op::Embedding { param, ids } => {
                    let p = store.get_mut(*param);
                    for (row, &id) in ids.iter().enumerate() {
                        let dst = &mut p.grad[id * c..(id + 1) * c];
                        dst.iter_mut().zip(&dy[row * c..(row + 1) * c]).for_each(|(g, d)| *g += d);
                    }
                }
                Op::MatMul(a, b) => {
                    let ([m, k], [_, n]) = (self.shape(*a), self.shape(*b));
                    let da = matmul_a_bt(&dy, &self.v(*b).data, m, n, k);
                    let db = matmul_at_b(&self.v(*a).data, &dy, m, k, n);
                    add_into(&mut grads[a.0], &da);
                    add_into(&mut grads[b.0], &db);
                }
                Op::Transpose(a) => {
                    let mut d = vec![0.0; r * c];
                    for p in 0..r {
                        for q in 0..c {
                            d[q * r + p] = dy[p * c + q];
                        }
                    }
                    add_into(&mut grads[a.0], &d);
                }
                Op::Add(a, b) => {
                    add_into(&mut grads[a.0], &dy);
                    add_into(&mut grads[b.0], &dy);
                }
                Op::Sub(a, b) => {
                    add_into(&mut grads[a.0], &dy);
                    let neg: Vec<f64> = dy.iter().map(|d| -d).collect();
                    add_into(&mut grads[b.0], &neg);
                }
                Op::Mul(a, b) => {
                    let da: Vec<f64> = dy.iter().zip(&self.v(*b).data).map(|(d, x)| d * x).collect();
                    let db: Vec<f64> = dy.iter().zip(&self.v(*a).data).map(|(d, x)| d * x).collect();
                    add_into(&mut grads[a.0], &da);
                    add_into(&mut grads[b.0], &db);
                }
                Op::AddRow(a, row) => {
                    add_into(&mut grads[a.0], &dy);
                    let mut dr = vec![0.0; c];
                    for (k, d) in dy.iter().enumerate() {
                        dr[k % c] += d;
                    }
                    add_into(&mut grads[row.0], &dr);
                }
                Op::MulRow(a, row) => {
                    let rv = &self.v(*row).data;
                    let av = &self.v(*a).data;
                    let da: Vec<f64> = dy.iter().enumerate().map(|(k, d)| d * rv[k % c]).collect();
                    let mut dr = vec![0.0; c];
                    for (k, d) in dy.iter().enumerate() {
                        dr[k % c] += d * av[k];
                    }
                    add_into(&mut grads[a.0], &da);
                    add_into(&mut grads[row.0], &dr);
                }
                Op::Scale(a, k) => {
                    let d: Vec<f64> = dy.iter().map(|x| x * k).collect();
                    add_into(&mut grads[a.0], &d);
                }
                Op::AddConst(a) => add_into(&mut grads[a.0], &dy),
                Op::ScaleBy { scalar, x } => {
                    let s = self.v(*scalar).data[0];
                    let dx: Vec<f64> = dy.iter().map(|d| d * s).collect();
                    let ds: f64 = dy.iter().zip(&self.v(*x).data).map(|(d, v)| d * v).sum();
                    add_into(&mut grads[x.0], &dx);
                    add_into(&mut grads[scalar.0], &[ds]);
                }
                Op::DivBy { x, scalar } => {
                    let s = self.v(*scalar).data[0];
                    let dx: Vec<f64> = dy.iter().map(|d| d / s).collect();
                    let ds: f64 = -dy.iter().zip(&self.v(*x).data).map(|(d, v)| d * v).sum::<f64>() / (s * s);
                    add_into(&mut grads[x.0], &dx);
                    add_into(&mut grads[scalar.0], &[ds]);
                }
                Op::Relu(a) => {
                    let d: Vec<f64> = dy.iter().zip(&self.v(*a).data).map(|(d, x)| if *x > 0.0 { *d } else { 0.0 }).collect();
                    add_into(&mut grads[a.0], &d);
                }
                Op::Sigmoid(a) => {
                    let d: Vec<f64> = dy.iter().zip(&y.data).map(|(d, s)| d * s * (1.0 - s)).collect();
                    add_into(&mut grads[a.0], &d);
                }
                Op::Square(a) => {
                    let d: Vec<f64> = dy.iter().zip(&self.v(*a).data).map(|(d, x)| 2.0 * d * x).collect();
                    add_into(&mut grads[a.0], &d);
                }
                Op::Softmax(a) => {
                    let mut d = vec![0.0; r * c];
                    for p in 0..r {
                        let yr = &y.data[p * c..(p + 1) * c];
                        let dr = &dy[p * c..(p + 1) * c];
                        let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                        for q in 0..c {
                            d[p * c + q] = yr[q] * (dr[q] - dot);
                        }
                    }
                    add_into(&mut grads[a.0], &d);
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let g = &self.v(*gamma).data;
                    let mut dx = vec![0.0; r * c];
                    let mut dg = vec![0.0; c];
                    let mut db = vec![0.0; c];
                    let cf = c as f64;
                    for p in 0..r {
                        let xh = &xhat[p * c..(p + 1) * c];
                        let dr = &dy[p * c..(p + 1) * c];
                        let mut sum_dxh = 0.0;
                        let mut sum_dxh_xh = 0.0;
                        for q in 0..c {
                            dg[q] += dr[q] * xh[q];
                            db[q] += dr[q];
                            let dxh = dr[q] * g[q];
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xh[q];
                        }
                        for q in 0..c {
                            let dxh = dr[q] * g[q];
                            dx[p * c + q] = inv_std[p] / cf * (cf * dxh - sum_dxh - xh[q] * sum_dxh_xh);
                        }
                    }
                    add_into(&mut grads[x.0], &dx);
                    add_into(&mut grads[gamma.0], &dg);
                    add_into(&mut grads[beta.0], &db);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let pc = self.shape(*p)[1];
                        let mut d = Vec::with_capacity(r * pc);
                        for row in 0..r {
                            d.extend_from_slice(&dy[row * c + offset..row * c + offset + pc]);
                        }
                        add_into(&mut grads[p.0], &d);
                        offset += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.v(*p).data.len();
                        add_into(&mut grads[p.0], &dy[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::SliceCols { x, start } => {
                    let xc = self.shape(*x)[1];
                    let mut d = vec![0.0; r * xc];
                    for row in 0..r {
                        d[row * xc + start..row * xc + start + c].copy_from_slice(&dy[row * c..(row + 1) * c]);
                    }
                    add_into(&mut grads[x.0], &d);
                }
                Op::GatherRows { x, idx } => {
                    let xr = self.shape(*x)[0];
                    let mut d = vec![0.0; xr * c];
                    for (row, &src) in idx.iter().enumerate() {
                        for q in 0..c {
                            d[src * c + q] += dy[row * c + q];
                        }
                    }
                    add_into(&mut grads[x.0], &d);
                }
                Op::Pick { x, r: pr, c: pc } => {
                    let [xr, xc] = self.shape(*x);
                    let mut d = vec![0.0; xr * xc];
                    d[pr * xc + pc] = dy[0];
                    add_into(&mut grads[x.0], &d);
                }
                Op::SelectSum { x, entries } => {
                    let [xr, xc] = self.shape(*x);
                    let mut d = vec![0.0; xr * xc];
                    for &(er, ec) in entries {
                        d[er * xc + ec] += dy[0];
                    }
                    add_into(&mut grads[x.0], &d);
                }
                Op::Sum(a) => {
                    let d = vec![dy[0]; self.v(*a).data.len()];
                    add_into(&mut grads[a.0], &d);
                }
                Op::Mean(a) => {
                    let n = self.v(*a).data.len();
                    let d = vec![dy[0] / n as f64; n];
                    add_into(&mut grads[a.0], &d);
                }
                Op::MeanRows(a) => {
                    let ar = self.shape(*a)[0];
                    let mut d = Vec::with_capacity(ar * c);
                    for _ in 0..ar {
                        d.extend(dy.iter().map(|v| v / ar as f64));
                    }
                    add_into(&mut grads[a.0], &d);
                }
                Op::SquaredFrobenius(a) => {
                    let d: Vec<f64> = self.v(*a).data.iter().map(|x| 2.0 * x * dy[0]).collect();
                    add_into(&mut grads[a.0], &d);
                }
                Op::CrossEntropy { logits, targets, probs, count } => {
                    let lc = self.shape(*logits)[1];
                    let mut d = vec![0.0; probs.len()];
                    if *count > 0 {
                        let scale = dy[0] / *count as f64;
                        for (row, t) in targets.iter().enumerate() {
                            if let Some(t) = t {
                                for q in 0..lc {
                                    d[row * lc + q] = probs[row * lc + q] * scale;
                                }
                                d[row * lc + t] -= scale;
                            }
                        }
                    }
                    add_into(&mut grads[logits.0], &d);
                }
                Op::Grl { x, lambda } => {
                    let d: Vec<f64> = dy.iter().map(|v| -lambda * v).collect();
                    add_into(&mut grads[x.0], &d);
                }
                Op::Dropout { x, mask } => {
                    let d: Vec<f64> = dy.iter().zip(mask).map(|(v, m)| v * m).collect();
                    add_into(&mut grads[x.0], &d);
                }
            }
            grads[i] = Some(dy);
        }
        self.grads = grads;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        ParamStore::new()
    }

    #[test]
    fn matmul_identity() {
        let mut g = Graph::new();
        let a = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.5]]).unwrap();
        let av = g.leaf(a.clone()).unwrap();
        let i = g.leaf(Tensor::identity(3)).unwrap();
        let out = g.matmul(av, i).unwrap();
        assert_eq!(g.value(out), &a);
    }

    #[test]
    fn softmax_symmetric() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::row(vec![0.0, 0.0])).unwrap();
        let y = g.softmax(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn squared_frobenius_of_identity() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::identity(2)).unwrap();
        let y = g.squared_frobenius(x).unwrap();
        assert_eq!(g.value(y).item(), 2.0);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::row(vec![1.0, 2.0])).unwrap();
        let sq = g.square(x).unwrap();
        let loss = g.sum(sq).unwrap();
        g.backward(loss, &mut store()).unwrap();
        assert_eq!(g.grad(x), vec![2.0, 4.0]);
    }

    #[test]
    fn detached_branch_has_no_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::row(vec![1.0, -3.0])).unwrap();
        let d = g.detach(x).unwrap();
        assert_eq!(g.value(d), g.value(x));
        let sq = g.square(d).unwrap();
        let loss = g.sum(sq).unwrap();
        g.backward(loss, &mut store()).unwrap();
        assert_eq!(g.grad(x), vec![0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::row(vec![1.0, 2.0])).unwrap();
        assert!(matches!(g.backward(x, &mut store()), Err(TensorError::NonScalarLoss([1, 2]))));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(2, 3)).unwrap();
        let b = g.leaf(Tensor::zeros(2, 3)).unwrap();
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn non_finite_values_are_trapped() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::row(vec![1.0])).unwrap();
        let z = g.leaf(Tensor::scalar(0.0)).unwrap();
        assert!(matches!(g.div_by(a, z), Err(TensorError::NonFinite { op: "div_by" })));
    }

    #[test]
    fn grl_negates_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::row(vec![0.3, -1.2, 4.0])).unwrap();
        let y = g.grl(x, 1.0).unwrap();
        assert_eq!(g.value(y), g.value(x));
        let loss = g.sum(y).unwrap();
        g.backward(loss, &mut store()).unwrap();
        assert_eq!(g.grad(x), vec![-1.0; 3]);

        let mut g = Graph::new();
        let x = g.leaf(Tensor::row(vec![0.3, -1.2])).unwrap();
        let y = g.grl(x, 0.0).unwrap();
        let loss = g.sum(y).unwrap();
        g.backward(loss, &mut store()).unwrap();
        assert!(g.grad(x).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn param_gradients_accumulate_until_zeroed() {
        let mut s = store();
        let w = s.add("w", Tensor::row(vec![1.0, 2.0])).unwrap();
        for _ in 0..2 {
            let mut g = Graph::new();
            let x = g.param(&s, w).unwrap();
            let sq = g.square(x).unwrap();
            let loss = g.sum(sq).unwrap();
            g.backward(loss, &mut s).unwrap();
        }
        assert_eq!(s.grad(w), &[4.0, 8.0]);
        s.zero_grad();
        let mut g = Graph::new();
        let x = g.param(&s, w).unwrap();
        let sq = g.square(x).unwrap();
        let loss = g.sum(sq).unwrap();
        g.backward(loss, &mut s).unwrap();
        assert_eq!(s.grad(w), &[2.0, 4.0]);
    }

    #[test]
    fn f32_precision_rounds_values() {
        let mut g = Graph::with_precision(Precision::F32);
        let x = g.leaf(Tensor::scalar(0.1)).unwrap();
        assert_eq!(g.value(x).item(), 0.1f32 as f64);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_k() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(3, 5)).unwrap();
        let l = g.cross_entropy(x, &[Some(0), Some(4), None]).unwrap();
        assert!((g.value(l).item() - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dropout_is_identity_outside_training() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::row(vec![1.0, 2.0])).unwrap();
        let y = g.dropout(x, 0.5).unwrap();
        assert_eq!(x, y);
    }
}
