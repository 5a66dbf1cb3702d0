use rand::Rng;

use super::{AdaptError, Result};
use crate::tensor::{xavier_uniform, Graph, ParamId, ParamStore, Tensor, Var};

/// Multiplier on the adversarial loss weight: ramps linearly from 0 to 1
/// over the first `fraction` of training steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvWarmup {
    pub fraction: f64,
}

impl Default for AdvWarmup {
    fn default() -> Self {
        Self { fraction: 0.1 }
    }
}

impl AdvWarmup {
    pub fn factor(&self, step: usize, total_steps: usize) -> f64 {
        let warm = self.fraction * total_steps as f64;
        if warm <= 0.0 {
            return 1.0;
        }
        (step as f64 / warm).min(1.0)
    }
}

/// `(1/N) Σ_d ‖H_cᵀ H_p^(d)‖²_F` over `N` row-aligned pairs.
pub fn orthogonality_loss(g: &mut Graph, pairs: &[(Var, Var)]) -> Result<Var> {
    if pairs.is_empty() {
        return Ok(g.leaf(Tensor::scalar(0.0))?);
    }
    let mut total = None;
    for &(hc, hp) in pairs {
        if g.shape(hc) != g.shape(hp) {
            return Err(AdaptError::Shape(format!("shared {:?} vs private {:?}", g.shape(hc), g.shape(hp))));
        }
        let hct = g.transpose(hc)?;
        let cross = g.matmul(hct, hp)?;
        let f = g.squared_frobenius(cross)?;
        total = Some(match total {
            None => f,
            Some(t) => g.add(t, f)?,
        });
    }
    Ok(g.scale(total.unwrap(), 1.0 / pairs.len() as f64)?)
}

/// Linear domain classifier over mean-pooled shared representations.
#[derive(Debug, Clone)]
pub struct DomainClassifier {
    w: ParamId,
    b: ParamId,
    num_domains: usize,
}

impl DomainClassifier {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, dim: usize, num_domains: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            w: store.add(format!("{prefix}.w"), xavier_uniform(rng, dim, num_domains))?,
            b: store.add(format!("{prefix}.b"), Tensor::zeros(1, num_domains))?,
            num_domains,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w, self.b]
    }

    pub fn logits(&self, g: &mut Graph, store: &ParamStore, pooled: Var) -> Result<Var> {
        let w = g.param(store, self.w)?;
        let b = g.param(store, self.b)?;
        let z = g.matmul(pooled, w)?;
        Ok(g.add_row(z, b)?)
    }
}

/// Cross-entropy of the domain classifier on `pooled` rows (one per
/// sentence, already passed through gradient reversal). With a single
/// domain there is nothing to discriminate: the loss is a constant 0 and the
/// flag comes back false.
pub fn domain_classifier_loss(
    g: &mut Graph,
    store: &ParamStore,
    classifier: &DomainClassifier,
    pooled: Var,
    labels: &[usize],
) -> Result<(Var, bool)> {
    if let Some(&d) = labels.iter().find(|&&d| d >= classifier.num_domains) {
        return Err(AdaptError::UnknownDomain(d.to_string()));
    }
    if classifier.num_domains < 2 {
        return Ok((g.leaf(Tensor::scalar(0.0))?, false));
    }
    let logits = classifier.logits(g, store, pooled)?;
    let targets: Vec<Option<usize>> = labels.iter().map(|&d| Some(d)).collect();
    Ok((g.cross_entropy(logits, &targets)?, true))
}

/// Per destination domain, softmax logits over `{shared} ∪ domains`.
#[derive(Debug, Clone)]
pub struct FusionCoefficients {
    logits: ParamId,
    num_domains: usize,
}

/// Logits whose softmax gives 0.5 to the shared encoder and splits the other
/// half over private encoders in proportion to domain sizes; the same row
/// for every destination domain.
pub fn init_fusion_logits(domain_sizes: &[usize]) -> Result<Tensor> {
    if let Some(d) = domain_sizes.iter().position(|&s| s == 0) {
        return Err(AdaptError::EmptyDomain(d));
    }
    let total: f64 = domain_sizes.iter().map(|&s| s as f64).sum();
    let mut row = vec![0.5f64.ln()];
    row.extend(domain_sizes.iter().map(|&s| (0.5 * s as f64 / total).ln()));
    Ok(Tensor::from_rows(&vec![row; domain_sizes.len()])?)
}

impl FusionCoefficients {
    pub fn new(store: &mut ParamStore, prefix: &str, domain_sizes: &[usize]) -> Result<Self> {
        let logits = store.add(format!("{prefix}.logits"), init_fusion_logits(domain_sizes)?)?;
        Ok(Self { logits, num_domains: domain_sizes.len() })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.logits]
    }

    /// Realized `[α_c, α_p^(0), .., α_p^(N-1)]` for destination `dest`.
    pub fn coefficients(&self, store: &ParamStore, dest: usize) -> Vec<f64> {
        let row = store.value(self.logits).row_slice(dest);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    /// `α_c·H_c + Σ_d α_p^(dest,d)·H_p^(d)`.
    pub fn fuse(&self, g: &mut Graph, store: &ParamStore, h_c: Var, h_p: &[Var], dest: usize) -> Result<Var> {
        if dest >= self.num_domains {
            return Err(AdaptError::UnknownDomain(dest.to_string()));
        }
        if h_p.len() != self.num_domains {
            return Err(AdaptError::Shape(format!("{} private inputs for {} domains", h_p.len(), self.num_domains)));
        }
        let logits = g.param(store, self.logits)?;
        let row = g.gather_rows(logits, &[dest])?;
        let alpha = g.softmax(row)?;
        let mut out = None;
        for (k, &h) in std::iter::once(&h_c).chain(h_p).enumerate() {
            if g.shape(h) != g.shape(h_c) {
                return Err(AdaptError::Shape(format!("fusion input {k} is {:?}, expected {:?}", g.shape(h), g.shape(h_c))));
            }
            let a = g.pick(alpha, 0, k)?;
            let term = g.scale_by(a, h)?;
            out = Some(match out {
                None => term,
                Some(o) => g.add(o, term)?,
            });
        }
        Ok(out.unwrap())
    }
}

#[derive(Debug, Clone)]
struct PairParams {
    /// Bilinear layer-pair score matrix.
    u: ParamId,
    /// Per-pair score offsets, `[1, K]`.
    bias: ParamId,
    /// Element gate logits, `[K, D]`.
    gates: ParamId,
}

/// Layer- and element-weighted feature matching from teacher to student
/// encoders through a shared linear map `f`.
#[derive(Debug, Clone)]
pub struct MatchingNetwork {
    f_w: ParamId,
    f_b: ParamId,
    pairs: Vec<Vec<PairParams>>,
    student_layers: usize,
    teacher_layers: usize,
    dim: usize,
}

impl MatchingNetwork {
    /// `f` starts as the identity; layer-pair scores and gates start at zero
    /// (uniform layer weights, all element weights 1).
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        students: usize,
        teachers: usize,
        student_layers: usize,
        teacher_layers: usize,
        dim: usize,
    ) -> Result<Self> {
        if students == 0 || teachers == 0 || student_layers == 0 || teacher_layers == 0 {
            return Err(AdaptError::ModeMismatch("matching needs at least one student and one teacher layer".into()));
        }
        let k = student_layers * teacher_layers;
        let f_w = store.add(format!("{prefix}.f.w"), Tensor::identity(dim))?;
        let f_b = store.add(format!("{prefix}.f.b"), Tensor::zeros(1, dim))?;
        let mut pairs = Vec::with_capacity(students);
        for i in 0..students {
            let mut row = Vec::with_capacity(teachers);
            for j in 0..teachers {
                row.push(PairParams {
                    u: store.add(format!("{prefix}.{i}.{j}.u"), Tensor::zeros(dim, dim))?,
                    bias: store.add(format!("{prefix}.{i}.{j}.bias"), Tensor::zeros(1, k))?,
                    gates: store.add(format!("{prefix}.{i}.{j}.gates"), Tensor::zeros(k, dim))?,
                });
            }
            pairs.push(row);
        }
        Ok(Self { f_w, f_b, pairs, student_layers, teacher_layers, dim })
    }

    pub fn num_pairs(&self) -> usize {
        self.student_layers * self.teacher_layers
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.f_w, self.f_b];
        for row in &self.pairs {
            for p in row {
                ids.extend([p.u, p.bias, p.gates]);
            }
        }
        ids
    }

    /// Layer weights `W` (`[1, K]`, softmax) and element weights `Q`
    /// (`K` rows of `[1, D]`, each with mean 1) for student `i`, teacher `j`.
    pub fn weights(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        i: usize,
        j: usize,
        student: &[Var],
        teacher_f: &[Var],
    ) -> Result<(Var, Vec<Var>)> {
        let p = &self.pairs[i][j];
        let u = g.param(store, p.u)?;
        let mut scores = Vec::with_capacity(self.num_pairs());
        let pooled_t: Vec<Var> = teacher_f.iter().map(|&t| g.mean_rows(t)).collect::<std::result::Result<_, _>>()?;
        for &s in student {
            let ps = g.mean_rows(s)?;
            let psu = g.matmul(ps, u)?;
            for &pt in &pooled_t {
                let ptt = g.transpose(pt)?;
                scores.push(g.matmul(psu, ptt)?);
            }
        }
        let scores = if scores.len() == 1 { scores[0] } else { g.concat_cols(&scores)? };
        let bias = g.param(store, p.bias)?;
        let scores = g.add(scores, bias)?;
        let w = g.softmax(scores)?;
        let gates = g.param(store, p.gates)?;
        let gates = g.sigmoid(gates)?;
        let mut q = Vec::with_capacity(self.num_pairs());
        for k in 0..self.num_pairs() {
            let row = g.gather_rows(gates, &[k])?;
            let m = g.mean(row)?;
            q.push(g.div_by(row, m)?);
        }
        Ok((w, q))
    }

    /// `(1/(|T||S|)) Σ_i Σ_j (1/(K·D)) Σ_{n,m} W Σ_d Q (f(t_j^m) - s_i^n)²_d`
    /// with squared residuals averaged over tokens. `students` pairs a
    /// student index with its layer outputs; teachers are detached here.
    pub fn loss(&self, g: &mut Graph, store: &ParamStore, students: &[(usize, Vec<Var>)], teachers: &[Vec<Var>]) -> Result<Var> {
        let fw = g.param(store, self.f_w)?;
        let fb = g.param(store, self.f_b)?;
        let mut mapped = Vec::with_capacity(teachers.len());
        for layers in teachers {
            if layers.len() != self.teacher_layers {
                return Err(AdaptError::Shape(format!("teacher has {} layers, expected {}", layers.len(), self.teacher_layers)));
            }
            let mut out = Vec::with_capacity(layers.len());
            for &t in layers {
                if g.shape(t)[1] != self.dim {
                    return Err(AdaptError::Shape(format!("teacher width {} vs f width {}", g.shape(t)[1], self.dim)));
                }
                let t = g.detach(t)?;
                let z = g.matmul(t, fw)?;
                out.push(g.add_row(z, fb)?);
            }
            mapped.push(out);
        }
        let norm = 1.0 / (self.num_pairs() * self.dim) as f64;
        let mut total = None;
        for (i, layers) in students {
            if layers.len() != self.student_layers {
                return Err(AdaptError::Shape(format!("student has {} layers, expected {}", layers.len(), self.student_layers)));
            }
            for (j, t_layers) in mapped.iter().enumerate() {
                let (w, q) = self.weights(g, store, *i, j, layers, t_layers)?;
                let mut pair_total = None;
                for (n, &s) in layers.iter().enumerate() {
                    if g.shape(s) != g.shape(t_layers[0]) {
                        return Err(AdaptError::Shape(format!("student {:?} vs mapped teacher {:?}", g.shape(s), g.shape(t_layers[0]))));
                    }
                    for (m, &t) in t_layers.iter().enumerate() {
                        let k = n * self.teacher_layers + m;
                        let diff = g.sub(t, s)?;
                        let sq = g.square(diff)?;
                        let per_dim = g.mean_rows(sq)?;
                        let gated = g.mul(per_dim, q[k])?;
                        let summed = g.sum(gated)?;
                        let wk = g.pick(w, 0, k)?;
                        let term = g.scale_by(wk, summed)?;
                        pair_total = Some(match pair_total {
                            None => term,
                            Some(p) => g.add(p, term)?,
                        });
                    }
                }
                let scaled = g.scale(pair_total.unwrap(), norm)?;
                total = Some(match total {
                    None => scaled,
                    Some(t) => g.add(t, scaled)?,
                });
            }
        }
        let count = (students.len() * teachers.len()).max(1) as f64;
        match total {
            Some(t) => Ok(g.scale(t, 1.0 / count)?),
            None => Ok(g.leaf(Tensor::scalar(0.0))?),
        }
    }
}
