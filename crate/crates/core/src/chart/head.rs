use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{cky_decode, margin_loss, ChartScores, GoldSpans, PosHead, Result, ScorerConfig, SpanScorer, TagVocab};
use crate::encoder::Vocab;
use crate::tensor::{Graph, ParamId, ParamStore, Var};
use crate::treebank::{LabelVocab, Token, Tree};

/// A training sentence prepared for one head.
#[derive(Debug, Clone)]
pub struct Example {
    pub tree: Tree,
    pub word_ids: Vec<usize>,
    /// `None` for tags outside the head's tag vocabulary.
    pub tags: Vec<Option<usize>>,
    pub gold: GoldSpans,
}

/// Parsing module of one language: label and tag inventories, span scorer
/// and optional PoS classifier.
#[derive(Debug, Clone)]
pub struct ParserHead {
    pub labels: LabelVocab,
    pub tags: TagVocab,
    pub scorer: SpanScorer,
    pub pos: Option<PosHead>,
}

impl ParserHead {
    /// The scorer and the PoS classifier draw from separate streams of
    /// `seed`, so toggling the PoS head leaves the scorer's initialization
    /// unchanged.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        labels: LabelVocab,
        tags: TagVocab,
        input_dim: usize,
        cfg: &ScorerConfig,
        with_pos: bool,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, 0));
        let scorer = SpanScorer::new(store, &format!("{prefix}.span"), input_dim, cfg, labels.len(), &mut rng)?;
        let pos = if with_pos && !tags.is_empty() {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, 1));
            Some(PosHead::new(store, &format!("{prefix}.pos"), input_dim, tags.len(), &mut rng)?)
        } else {
            None
        };
        Ok(Self { labels, tags, scorer, pos })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.scorer.param_ids();
        if let Some(p) = &self.pos {
            ids.extend(p.param_ids());
        }
        ids
    }

    /// Fails with `UnknownLabel` when the tree uses a label this head has
    /// never seen.
    pub fn example(&self, tree: &Tree, vocab: &Vocab) -> Result<Example> {
        Ok(Example {
            tree: tree.clone(),
            word_ids: vocab.ids(&tree.words()),
            tags: tree.tags().iter().map(|t| self.tags.id(t)).collect(),
            gold: GoldSpans::from_tree(tree, &self.labels)?,
        })
    }

    /// Parsing hinge loss and, with a PoS head, the tagging cross-entropy
    /// on token vectors `h`.
    pub fn losses(&self, g: &mut Graph, store: &ParamStore, h: Var, ex: &Example) -> Result<(Var, Option<Var>)> {
        let scores = self.scorer.forward(g, store, h)?;
        let (parse, _) = margin_loss(g, scores, &ex.gold)?;
        let pos = match &self.pos {
            Some(pos) => {
                let logits = pos.logits(g, store, h)?;
                Some(pos.loss(g, logits, &ex.tags)?)
            }
            None => None,
        };
        Ok((parse, pos))
    }

    /// Chart scores for token vectors `h`.
    pub fn chart(&self, g: &mut Graph, store: &ParamStore, h: Var) -> Result<ChartScores> {
        let n = g.shape(h)[0];
        let scores = self.scorer.forward(g, store, h)?;
        ChartScores::from_label_scores(n, g.value(scores))
    }

    /// Decodes a tree over `tokens`. Preterminal tags come from the PoS head
    /// when there is one and from `tokens` otherwise.
    pub fn predict(&self, g: &mut Graph, store: &ParamStore, h: Var, tokens: &[Token]) -> Result<Tree> {
        let chart = self.chart(g, store, h)?;
        let decoded = cky_decode(&chart, true);
        let mut toks = tokens.to_vec();
        if let Some(pos) = &self.pos {
            let logits = pos.logits(g, store, h)?;
            for (t, id) in toks.iter_mut().zip(PosHead::predict(g.value(logits))) {
                t.pos = self.tags.tag(id).to_string();
            }
        }
        decoded.to_tree(&self.labels, &toks)
    }
}
