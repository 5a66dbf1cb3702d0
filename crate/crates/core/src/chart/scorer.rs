use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{all_spans, ChartError, Result};
use crate::tensor::{xavier_uniform, Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub hidden: usize,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self { hidden: 128 }
    }
}

/// Two-layer feedforward over span features. The first half of each token
/// vector is read as a forward stream and the second half as a backward
/// stream; a span `(i, j)` is represented by
/// `[f(j) - f(i) ; b(i + 1) - b(j + 1)]` over the token sequence padded with
/// a zero row on each side.
#[derive(Debug, Clone)]
pub struct SpanScorer {
    w1: ParamId,
    b1: ParamId,
    ln_g: ParamId,
    ln_b: ParamId,
    w2: ParamId,
    b2: ParamId,
    num_labels: usize,
}

impl SpanScorer {
    /// `num_labels` counts ∅; the output has `num_labels - 1` columns.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        cfg: &ScorerConfig,
        num_labels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if num_labels < 2 {
            return Err(ChartError::NoLabels);
        }
        let h = cfg.hidden;
        Ok(Self {
            w1: store.add(format!("{prefix}.w1"), xavier_uniform(rng, input_dim, h))?,
            b1: store.add(format!("{prefix}.b1"), Tensor::zeros(1, h))?,
            ln_g: store.add(format!("{prefix}.ln.g"), Tensor::row(vec![1.0; h]))?,
            ln_b: store.add(format!("{prefix}.ln.b"), Tensor::zeros(1, h))?,
            w2: store.add(format!("{prefix}.w2"), xavier_uniform(rng, h, num_labels - 1))?,
            b2: store.add(format!("{prefix}.b2"), Tensor::zeros(1, num_labels - 1))?,
            num_labels,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w1, self.b1, self.ln_g, self.ln_b, self.w2, self.b2]
    }

    /// Span features `[n(n+1)/2, dim]` in chart row order.
    pub fn span_features(g: &mut Graph, h: Var) -> Result<Var> {
        let [n, d] = g.shape(h);
        if n == 0 {
            return Err(ChartError::EmptySentence);
        }
        let zero = g.leaf(Tensor::zeros(1, d))?;
        let padded = g.concat_rows(&[zero, h, zero])?;
        let fwd = g.slice_cols(padded, 0, d / 2)?;
        let bwd = g.slice_cols(padded, d / 2, d)?;
        let (mut is, mut js, mut is1, mut js1) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, j) in all_spans(n) {
            is.push(i);
            js.push(j);
            is1.push(i + 1);
            js1.push(j + 1);
        }
        let fj = g.gather_rows(fwd, &js)?;
        let fi = g.gather_rows(fwd, &is)?;
        let bi = g.gather_rows(bwd, &is1)?;
        let bj = g.gather_rows(bwd, &js1)?;
        let f = g.sub(fj, fi)?;
        let b = g.sub(bi, bj)?;
        Ok(g.concat_cols(&[f, b])?)
    }

    /// Label scores `[n(n+1)/2, num_labels - 1]` for token vectors `h`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, h: Var) -> Result<Var> {
        let x = Self::span_features(g, h)?;
        let w1 = g.param(store, self.w1)?;
        let b1 = g.param(store, self.b1)?;
        let ln_g = g.param(store, self.ln_g)?;
        let ln_b = g.param(store, self.ln_b)?;
        let w2 = g.param(store, self.w2)?;
        let b2 = g.param(store, self.b2)?;
        let z = g.matmul(x, w1)?;
        let z = g.add_row(z, b1)?;
        let z = g.layer_norm(z, ln_g, ln_b)?;
        let z = g.relu(z)?;
        let z = g.matmul(z, w2)?;
        Ok(g.add_row(z, b2)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{span_count, span_index, ChartScores};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn output_width_and_span_count() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = SpanScorer::new(&mut store, "s", 6, &ScorerConfig { hidden: 5 }, 4, &mut rng).unwrap();
        for n in [1, 4] {
            let mut g = Graph::new();
            let h = g.leaf(xavier_uniform(&mut rng, n, 6)).unwrap();
            let out = s.forward(&mut g, &store, h).unwrap();
            assert_eq!(g.shape(out), [span_count(n), 3]);
            let chart = ChartScores::from_label_scores(n, g.value(out)).unwrap();
            assert_eq!(chart.num_labels(), 4);
            assert!((0..n).all(|i| chart.score(i, i + 1, 0) == 0.0));
        }
    }

    #[test]
    fn boundary_difference_features() {
        // forward half = [1, 2, 3], backward half = [10, 20, 30]
        let h = Tensor::from_rows(&[vec![1.0, 10.0], vec![2.0, 20.0], vec![3.0, 30.0]]).unwrap();
        let mut g = Graph::new();
        let hv = g.leaf(h).unwrap();
        let f = SpanScorer::span_features(&mut g, hv).unwrap();
        let v = g.value(f);
        // padded fwd: [0,1,2,3,0]; bwd: [0,10,20,30,0]
        assert_eq!(v.row_slice(span_index(3, 0, 3)), &[3.0, 10.0]);
        assert_eq!(v.row_slice(span_index(3, 1, 2)), &[2.0 - 1.0, 20.0 - 30.0]);
        assert_eq!(v.row_slice(span_index(3, 0, 1)), &[1.0, 10.0 - 20.0]);
    }

    #[test]
    fn requires_a_label() {
        let mut store = ParamStore::new();
        let r = SpanScorer::new(&mut store, "s", 4, &ScorerConfig::default(), 1, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(ChartError::NoLabels)));
    }
}
