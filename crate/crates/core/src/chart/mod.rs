//! Span charts, exact CKY decoding and the max-margin parsing loss.
//!
//! A chart holds one score per (span, label) for every half-open span
//! `0 <= i < j <= n`, label 0 being ∅ with score 0. Decoding picks a full
//! binary bracketing plus one label per span; ∅ spans are elided when the
//! result is turned back into a tree.

mod head;
mod pos;
mod scorer;

pub use head::{Example, ParserHead};
pub use pos::{PosHead, TagVocab};
pub use scorer::{ScorerConfig, SpanScorer};

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::tensor::{Graph, Tensor, TensorError, Var};
use crate::treebank::{spans_to_tree, tree_to_spans, LabelVocab, Token, Tree, TreebankError, EMPTY_LABEL_ID};

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("empty sentence")]
    EmptySentence,
    #[error("label vocabulary has no labels besides the empty one")]
    NoLabels,
    #[error("label `{0}` is not in the label vocabulary")]
    UnknownLabel(String),
    #[error("tag id {id} out of range for {size} tags")]
    TagOutOfRange { id: usize, size: usize },
    #[error("chart for n={n} needs {expected} rows, got {got}")]
    ChartShape { n: usize, expected: usize, got: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Treebank(#[from] TreebankError),
}

pub type Result<T> = std::result::Result<T, ChartError>;

pub fn span_count(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Row of span `(i, j)` in a chart over `n` tokens. Spans are ordered by
/// start, then end.
pub fn span_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j <= n);
    i * (2 * n + 1 - i) / 2 + (j - i - 1)
}

/// All spans in row order.
pub fn all_spans(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..=n).map(move |j| (i, j)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartScores {
    n: usize,
    num_labels: usize,
    data: Vec<f64>,
}

impl ChartScores {
    /// `scores` has one row per span and one column per non-∅ label.
    pub fn from_label_scores(n: usize, scores: &Tensor) -> Result<Self> {
        if n == 0 {
            return Err(ChartError::EmptySentence);
        }
        let rows = span_count(n);
        if scores.rows() != rows {
            return Err(ChartError::ChartShape { n, expected: rows, got: scores.rows() });
        }
        let num_labels = scores.cols() + 1;
        let mut data = vec![0.0; rows * num_labels];
        for r in 0..rows {
            data[r * num_labels + 1..(r + 1) * num_labels].copy_from_slice(scores.row_slice(r));
        }
        Ok(Self { n, num_labels, data })
    }

    /// Builds a chart from a closure over `(i, j, label)` for labels ≥ 1.
    pub fn from_fn(n: usize, num_labels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; span_count(n) * num_labels];
        for (i, j) in all_spans(n) {
            let r = span_index(n, i, j);
            for l in 1..num_labels {
                data[r * num_labels + l] = f(i, j, l);
            }
        }
        Self { n, num_labels, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Label count including ∅.
    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn score(&self, i: usize, j: usize, label: usize) -> f64 {
        self.data[span_index(self.n, i, j) * self.num_labels + label]
    }

    fn row(&self, i: usize, j: usize) -> &[f64] {
        let r = span_index(self.n, i, j);
        &self.data[r * self.num_labels..(r + 1) * self.num_labels]
    }

    /// Sum of the scores of the given spans.
    pub fn total(&self, spans: &[(usize, usize, usize)]) -> f64 {
        spans.iter().map(|&(i, j, l)| self.score(i, j, l)).sum()
    }

    /// Debug dump: `i j best_label score` per span, ∅ printed as `-`.
    pub fn dump(&self, labels: &LabelVocab) -> String {
        let mut s = String::new();
        for (i, j) in all_spans(self.n) {
            let (l, v) = argmax(self.row(i, j), 0);
            let _ = writeln!(s, "{i} {j} {} {v:.6}", labels.label(l).unwrap_or("-"));
        }
        s
    }
}

fn argmax(row: &[f64], from: usize) -> (usize, f64) {
    let mut best = (from, row[from]);
    for (l, v) in row.iter().enumerate().skip(from + 1) {
        if *v > best.1 {
            best = (l, *v);
        }
    }
    best
}

/// Gold label id per span; absent spans are ∅.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoldSpans {
    n: usize,
    labels: HashMap<(usize, usize), usize>,
}

impl GoldSpans {
    pub fn from_tree(tree: &Tree, vocab: &LabelVocab) -> Result<Self> {
        let mut labels = HashMap::new();
        for s in tree_to_spans(tree) {
            let id = vocab.id(&s.label).ok_or_else(|| ChartError::UnknownLabel(s.label.clone()))?;
            labels.insert((s.start, s.end), id);
        }
        Ok(Self { n: tree.len(), labels })
    }

    pub fn label(&self, i: usize, j: usize) -> usize {
        self.labels.get(&(i, j)).copied().unwrap_or(EMPTY_LABEL_ID)
    }

    /// Labeled (non-∅) gold spans, sorted.
    pub fn labeled(&self) -> Vec<(usize, usize, usize)> {
        let mut v: Vec<_> = self.labels.iter().map(|(&(i, j), &l)| (i, j, l)).collect();
        v.sort_unstable();
        v
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Hamming cost of a decoded bracketing against this gold.
    pub fn hamming(&self, spans: &[(usize, usize, usize)]) -> usize {
        spans.iter().filter(|&&(i, j, l)| l != self.label(i, j)).count()
    }
}

/// A decoded bracketing: `2n - 1` spans `(i, j, label)` with ∅ allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub spans: Vec<(usize, usize, usize)>,
    /// Sum of chart scores over the chosen spans, augmentation included when
    /// loss-augmented.
    pub score: f64,
}

impl Decoded {
    /// Chosen spans with a non-∅ label.
    pub fn labeled(&self) -> Vec<(usize, usize, usize)> {
        self.spans.iter().copied().filter(|s| s.2 != EMPTY_LABEL_ID).collect()
    }

    pub fn to_tree(&self, labels: &LabelVocab, tokens: &[Token]) -> Result<Tree> {
        let assignment: Vec<_> = self.spans.iter().map(|&(i, j, l)| (i, j, labels.label(l).map(str::to_string))).collect();
        Ok(spans_to_tree(&assignment, tokens)?)
    }
}

fn decode(chart: &ChartScores, require_root_label: bool, gold: Option<&GoldSpans>) -> Decoded {
    let n = chart.n;
    let size = span_count(n);
    let mut best = vec![0.0; size];
    let mut label = vec![0usize; size];
    let mut split = vec![0usize; size];
    let mut row_buf = vec![0.0; chart.num_labels];
    for len in 1..=n {
        for i in 0..=n - len {
            let j = i + len;
            let r = span_index(n, i, j);
            row_buf.copy_from_slice(chart.row(i, j));
            if let Some(g) = gold {
                let gl = g.label(i, j);
                for (l, v) in row_buf.iter_mut().enumerate() {
                    if l != gl {
                        *v += 1.0;
                    }
                }
            }
            let from = usize::from(require_root_label && len == n && chart.num_labels > 1);
            let (l, v) = argmax(&row_buf, from);
            let mut inner = 0.0;
            if len > 1 {
                let mut best_k = (i + 1, f64::NEG_INFINITY);
                for k in i + 1..j {
                    let v = best[span_index(n, i, k)] + best[span_index(n, k, j)];
                    if v > best_k.1 {
                        best_k = (k, v);
                    }
                }
                split[r] = best_k.0;
                inner = best_k.1;
            }
            best[r] = v + inner;
            label[r] = l;
        }
    }
    let mut spans = Vec::with_capacity(2 * n - 1);
    let mut stack = vec![(0, n)];
    while let Some((i, j)) = stack.pop() {
        let r = span_index(n, i, j);
        spans.push((i, j, label[r]));
        if j - i > 1 {
            let k = split[r];
            stack.push((k, j));
            stack.push((i, k));
        }
    }
    Decoded { spans, score: best[span_index(n, 0, n)] }
}

/// Highest-scoring labeled binary bracketing. Ties go to the lowest label id
/// and then the lowest split point.
pub fn cky_decode(chart: &ChartScores, require_root_label: bool) -> Decoded {
    decode(chart, require_root_label, None)
}

/// Argmax of score plus Hamming distance to `gold`; the root stays labeled.
pub fn loss_augmented_decode(chart: &ChartScores, gold: &GoldSpans) -> Decoded {
    decode(chart, true, Some(gold))
}

/// Hinge loss `max(0, s(T̂) + Δ(T̂) - s(gold))` on the `[spans x labels-1]`
/// score node, with `T̂` from [`loss_augmented_decode`]. Returns the loss
/// and the augmented prediction.
pub fn margin_loss(g: &mut Graph, scores: Var, gold: &GoldSpans) -> Result<(Var, Decoded)> {
    let n = gold.len();
    let chart = ChartScores::from_label_scores(n, g.value(scores))?;
    let pred = loss_augmented_decode(&chart, gold);
    let delta = gold.hamming(&pred.spans) as f64;
    let cells = |spans: Vec<(usize, usize, usize)>| -> Vec<(usize, usize)> {
        spans.into_iter().map(|(i, j, l)| (span_index(n, i, j), l - 1)).collect()
    };
    let pred_sum = g.select_sum(scores, &cells(pred.labeled()))?;
    let gold_sum = g.select_sum(scores, &cells(gold.labeled()))?;
    let diff = g.sub(pred_sum, gold_sum)?;
    let shifted = g.add_const(diff, delta)?;
    Ok((g.relu(shifted)?, pred))
}
