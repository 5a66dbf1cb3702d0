//! Token embeddings plus a stack of pre-norm self-attention blocks.
//!
//! Every block output is kept in [`EncoderOutput::layers`] so layer-wise
//! losses (feature matching) can reach intermediate representations.

mod pretrained;
mod vocab;

pub use pretrained::{load_pretrained_embeddings, PretrainedStats};
pub use vocab::{build_vocab, Vocab, PAD, UNK};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{xavier_uniform, Graph, ParamId, ParamStore, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("input of {len} tokens exceeds max_positions {max}")]
    TooLong { len: usize, max: usize },
    #[error("embedding file line {line}: expected {expected} values, found {found}")]
    DimMismatch { line: usize, expected: usize, found: usize },
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EncoderError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ff_dim: usize,
    pub max_positions: usize,
    pub dropout_rate: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { vocab_size: 2, dim: 64, num_layers: 2, num_heads: 4, ff_dim: 128, max_positions: 100, dropout_rate: 0.1 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 || !self.dim.is_multiple_of(self.num_heads) {
            return Err(EncoderError::Config(format!("dim {} not divisible by {} heads", self.dim, self.num_heads)));
        }
        if !self.dim.is_multiple_of(2) {
            return Err(EncoderError::Config("dim must be even for span features".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(EncoderError::Config(format!("dropout rate {}", self.dropout_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Block {
    ln1: (ParamId, ParamId),
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln2: (ParamId, ParamId),
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// Per-token representations from one forward pass.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// `[n, dim]`, the last layer (or the embeddings when there are no layers).
    pub output: Var,
    /// One `[n, dim]` output per block.
    pub layers: Vec<Var>,
    /// `attention[layer][head]` is the `[n, n]` row-stochastic weight matrix.
    pub attention: Vec<Vec<Var>>,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    cfg: EncoderConfig,
    tok_emb: ParamId,
    pos_emb: ParamId,
    blocks: Vec<Block>,
}

fn ones(n: usize) -> Tensor {
    Tensor::row(vec![1.0; n])
}

impl Encoder {
    /// Registers parameters under `prefix` in `store`.
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, cfg: EncoderConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let tok_emb = store.add(format!("{prefix}.tok_emb"), xavier_uniform(rng, cfg.vocab_size, d))?;
        let pos_emb = store.add(format!("{prefix}.pos_emb"), xavier_uniform(rng, cfg.max_positions, d))?;
        let mut blocks = Vec::with_capacity(cfg.num_layers);
        for l in 0..cfg.num_layers {
            let p = format!("{prefix}.layer{l}");
            blocks.push(Block {
                ln1: (store.add(format!("{p}.ln1.g"), ones(d))?, store.add(format!("{p}.ln1.b"), Tensor::zeros(1, d))?),
                wq: store.add(format!("{p}.wq"), xavier_uniform(rng, d, d))?,
                wk: store.add(format!("{p}.wk"), xavier_uniform(rng, d, d))?,
                wv: store.add(format!("{p}.wv"), xavier_uniform(rng, d, d))?,
                wo: store.add(format!("{p}.wo"), xavier_uniform(rng, d, d))?,
                bo: store.add(format!("{p}.bo"), Tensor::zeros(1, d))?,
                ln2: (store.add(format!("{p}.ln2.g"), ones(d))?, store.add(format!("{p}.ln2.b"), Tensor::zeros(1, d))?),
                w1: store.add(format!("{p}.w1"), xavier_uniform(rng, d, cfg.ff_dim))?,
                b1: store.add(format!("{p}.b1"), Tensor::zeros(1, cfg.ff_dim))?,
                w2: store.add(format!("{p}.w2"), xavier_uniform(rng, cfg.ff_dim, d))?,
                b2: store.add(format!("{p}.b2"), Tensor::zeros(1, d))?,
            });
        }
        Ok(Self { cfg, tok_emb, pos_emb, blocks })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn token_embedding(&self) -> ParamId {
        self.tok_emb
    }

    /// Every parameter id owned by this encoder.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.tok_emb, self.pos_emb];
        for b in &self.blocks {
            ids.extend([b.ln1.0, b.ln1.1, b.wq, b.wk, b.wv, b.wo, b.bo, b.ln2.0, b.ln2.1, b.w1, b.b1, b.w2, b.b2]);
        }
        ids
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, ids: &[usize]) -> Result<EncoderOutput> {
        let n = ids.len();
        if n > self.cfg.max_positions {
            return Err(EncoderError::TooLong { len: n, max: self.cfg.max_positions });
        }
        let positions: Vec<usize> = (0..n).collect();
        let tok = g.embedding(store, self.tok_emb, ids)?;
        let pos = g.embedding(store, self.pos_emb, &positions)?;
        let emb = g.add(tok, pos)?;
        let mut x = g.dropout(emb, self.cfg.dropout_rate)?;
        let mut layers = Vec::with_capacity(self.blocks.len());
        let mut attention = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, attn) = self.block(g, store, b, x)?;
            x = y;
            layers.push(x);
            attention.push(attn);
        }
        Ok(EncoderOutput { output: x, layers, attention })
    }

    fn block(&self, g: &mut Graph, store: &ParamStore, b: &Block, x: Var) -> Result<(Var, Vec<Var>)> {
        let d = self.cfg.dim;
        let heads = self.cfg.num_heads;
        let dh = d / heads;
        let rate = self.cfg.dropout_rate;

        let (g1, b1) = (g.param(store, b.ln1.0)?, g.param(store, b.ln1.1)?);
        let h = g.layer_norm(x, g1, b1)?;
        let wq = g.param(store, b.wq)?;
        let wk = g.param(store, b.wk)?;
        let wv = g.param(store, b.wv)?;
        let q = g.matmul(h, wq)?;
        let k = g.matmul(h, wk)?;
        let v = g.matmul(h, wv)?;
        let mut outs = Vec::with_capacity(heads);
        let mut weights = Vec::with_capacity(heads);
        for hd in 0..heads {
            let (lo, hi) = (hd * dh, (hd + 1) * dh);
            let qh = g.slice_cols(q, lo, hi)?;
            let kh = g.slice_cols(k, lo, hi)?;
            let vh = g.slice_cols(v, lo, hi)?;
            let kt = g.transpose(kh)?;
            let logits = g.matmul(qh, kt)?;
            let logits = g.scale(logits, 1.0 / (dh as f64).sqrt())?;
            let a = g.softmax(logits)?;
            weights.push(a);
            outs.push(g.matmul(a, vh)?);
        }
        let cat = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs)? };
        let wo = g.param(store, b.wo)?;
        let bo = g.param(store, b.bo)?;
        let proj = g.matmul(cat, wo)?;
        let proj = g.add_row(proj, bo)?;
        let proj = g.dropout(proj, rate)?;
        let x = g.add(x, proj)?;

        let (g2, b2) = (g.param(store, b.ln2.0)?, g.param(store, b.ln2.1)?);
        let h = g.layer_norm(x, g2, b2)?;
        let w1 = g.param(store, b.w1)?;
        let bias1 = g.param(store, b.b1)?;
        let w2 = g.param(store, b.w2)?;
        let bias2 = g.param(store, b.b2)?;
        let f = g.matmul(h, w1)?;
        let f = g.add_row(f, bias1)?;
        let f = g.relu(f)?;
        let f = g.matmul(f, w2)?;
        let f = g.add_row(f, bias2)?;
        let f = g.dropout(f, rate)?;
        Ok((g.add(x, f)?, weights))
    }

    /// Eval-mode forward returning plain values: `(output, layers)`.
    pub fn encode(&self, store: &ParamStore, ids: &[usize]) -> Result<(Tensor, Vec<Tensor>)> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, store, ids)?;
        let layers = out.layers.iter().map(|v| g.value(*v).clone()).collect();
        Ok((g.value(out.output).clone(), layers))
    }

    /// Adds `count` token-embedding rows, each a copy of the UNK row, for
    /// forms appended to the vocabulary after training.
    pub fn grow_vocab(&mut self, store: &mut ParamStore, count: usize) -> Result<()> {
        if count == 0 {
            return Ok(());
        }
        let unk = store.value(self.tok_emb).row_slice(UNK).to_vec();
        store.append_rows(self.tok_emb, &vec![unk; count])?;
        self.cfg.vocab_size += count;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(layers: usize) -> (ParamStore, Encoder) {
        let mut store = ParamStore::new();
        let cfg =
            EncoderConfig { vocab_size: 10, dim: 8, num_layers: layers, num_heads: 2, ff_dim: 16, max_positions: 12, dropout_rate: 0.1 };
        let enc = Encoder::new(&mut store, "enc", cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        (store, enc)
    }

    #[test]
    fn output_shapes() {
        let (store, enc) = small(2);
        let (out, layers) = enc.encode(&store, &[2, 3, 4, 5]).unwrap();
        assert_eq!(out.shape(), [4, 8]);
        assert_eq!(layers.len(), 2);
        assert_eq!(layers[1], out);
    }

    #[test]
    fn position_embeddings_break_permutation_symmetry() {
        let (store, enc) = small(2);
        let (a, _) = enc.encode(&store, &[2, 3, 4]).unwrap();
        let (b, _) = enc.encode(&store, &[3, 2, 4]).unwrap();
        assert_ne!(a.row_slice(0), b.row_slice(1));
        assert_ne!(a.row_slice(2), b.row_slice(2));
    }

    #[test]
    fn zero_layers_is_embedding_sum() {
        let (store, enc) = small(0);
        let (out, layers) = enc.encode(&store, &[4, 5]).unwrap();
        assert!(layers.is_empty());
        let tok = store.value(enc.tok_emb);
        let pos = store.value(enc.pos_emb);
        for r in 0..2 {
            for c in 0..8 {
                assert_eq!(out.get(r, c), tok.get(4 + r, c) + pos.get(r, c));
            }
        }
    }

    #[test]
    fn too_long_rejected() {
        let (store, enc) = small(1);
        assert!(matches!(enc.encode(&store, &[2; 13]), Err(EncoderError::TooLong { len: 13, max: 12 })));
    }

    #[test]
    fn eval_mode_is_deterministic_and_attention_normalized() {
        let (store, enc) = small(2);
        assert_eq!(enc.encode(&store, &[2, 7, 3]).unwrap(), enc.encode(&store, &[2, 7, 3]).unwrap());
        let mut g = Graph::new();
        let out = enc.forward(&mut g, &store, &[2, 7, 3, 9]).unwrap();
        for layer in &out.attention {
            for head in layer {
                let a = g.value(*head);
                for r in 0..a.rows() {
                    assert!((a.row_slice(r).iter().sum::<f64>() - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn every_layer_receives_gradient() {
        let (mut store, enc) = small(2);
        let mut g = Graph::new();
        let out = enc.forward(&mut g, &store, &[2, 7, 3, 9]).unwrap();
        let sq = g.square(out.output).unwrap();
        let loss = g.sum(sq).unwrap();
        g.backward(loss, &mut store).unwrap();
        for id in enc.param_ids() {
            let p = store.get(id);
            let norm: f64 = p.grad.iter().map(|v| v * v).sum();
            assert!(norm > 0.0, "no gradient reached {}", p.name);
        }
    }

    #[test]
    fn grow_vocab_copies_unk_row() {
        let (mut store, mut enc) = small(1);
        enc.grow_vocab(&mut store, 3).unwrap();
        let t = store.value(enc.tok_emb);
        assert_eq!(t.rows(), 13);
        assert_eq!(t.row_slice(12), t.row_slice(UNK));
        assert_eq!(enc.config().vocab_size, 13);
    }

    #[test]
    fn rejects_bad_head_count() {
        let mut store = ParamStore::new();
        let cfg = EncoderConfig { dim: 10, num_heads: 4, ..EncoderConfig::default() };
        assert!(Encoder::new(&mut store, "e", cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
