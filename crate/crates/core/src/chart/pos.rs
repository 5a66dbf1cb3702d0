use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ChartError, Result};
use crate::tensor::{xavier_uniform, Graph, ParamId, ParamStore, Tensor, Var};
use crate::treebank::Tree;

/// PoS tag inventory of one language.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TagVocab {
    tags: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for TagVocab {
    fn from(tags: Vec<String>) -> Self {
        let index = tags.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tags, index }
    }
}

impl From<TagVocab> for Vec<String> {
    fn from(v: TagVocab) -> Self {
        v.tags
    }
}

impl TagVocab {
    /// Sorted set of every tag in `trees`.
    pub fn from_trees<'a>(trees: impl IntoIterator<Item = &'a Tree>) -> Self {
        let set: BTreeSet<String> = trees.into_iter().flat_map(|t| t.tags()).collect();
        Self::from(set.into_iter().collect::<Vec<_>>())
    }

    pub fn id(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn tag(&self, id: usize) -> &str {
        &self.tags[id]
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

/// Per-token linear tag classifier.
#[derive(Debug, Clone)]
pub struct PosHead {
    w: ParamId,
    b: ParamId,
    num_tags: usize,
}

impl PosHead {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, input_dim: usize, num_tags: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            w: store.add(format!("{prefix}.w"), xavier_uniform(rng, input_dim, num_tags))?,
            b: store.add(format!("{prefix}.b"), Tensor::zeros(1, num_tags))?,
            num_tags,
        })
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w, self.b]
    }

    pub fn logits(&self, g: &mut Graph, store: &ParamStore, h: Var) -> Result<Var> {
        let w = g.param(store, self.w)?;
        let b = g.param(store, self.b)?;
        let z = g.matmul(h, w)?;
        Ok(g.add_row(z, b)?)
    }

    /// Mean cross-entropy over tokens with a known gold tag.
    pub fn loss(&self, g: &mut Graph, logits: Var, tags: &[Option<usize>]) -> Result<Var> {
        if let Some(&id) = tags.iter().flatten().find(|&&t| t >= self.num_tags) {
            return Err(ChartError::TagOutOfRange { id, size: self.num_tags });
        }
        Ok(g.cross_entropy(logits, tags)?)
    }

    /// Argmax tag per row, lowest id on ties.
    pub fn predict(logits: &Tensor) -> Vec<usize> {
        (0..logits.rows())
            .map(|r| {
                let row = logits.row_slice(r);
                let mut best = 0;
                for (i, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}
