//! Labeled-bracket (PARSEVAL/evalb style) scoring and PoS accuracy.
//!
//! Labels are compared verbatim, so function tags are part of the label.
//! Tokens whose gold PoS tag is in the punctuation set are removed from both
//! trees before brackets are read off, and brackets left without any token
//! are dropped. Unary chains contribute one bracket per node.

mod report;

pub use report::{aggregate, format_mean_std, Aggregate, MetricReport, Summary};

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::treebank::Tree;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("gold and predicted lists differ in length ({gold} vs {pred})")]
    CountMismatch { gold: usize, pred: usize },
    #[error("sentence {index}: gold and predicted yields differ")]
    YieldMismatch { index: usize },
    #[error("cannot aggregate an empty list of reports")]
    EmptyAggregate,
    #[error("malformed report line `{0}`")]
    MalformedReport(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub punct_pos_tags: BTreeSet<String>,
    /// When false, labels are cut at the first `-` or `=` before comparison.
    pub function_tags_atomic: bool,
    /// Sentences longer than this (after punctuation removal) are skipped.
    pub max_sentence_length_for_scoring: Option<usize>,
    /// Whether the root bracket counts.
    pub count_root: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            punct_pos_tags: [",", ".", ":", ";", "``", "''", "PUNC"].iter().map(|s| s.to_string()).collect(),
            function_tags_atomic: true,
            max_sentence_length_for_scoring: None,
            count_root: true,
        }
    }
}

impl EvalConfig {
    pub fn with_punct<I: IntoIterator<Item = S>, S: Into<String>>(tags: I) -> Self {
        Self { punct_pos_tags: tags.into_iter().map(Into::into).collect(), ..Self::default() }
    }

    fn label<'a>(&self, label: &'a str) -> &'a str {
        if self.function_tags_atomic {
            return label;
        }
        // keep labels such as -NONE- or -LRB- intact
        match label[1..].find(['-', '=']) {
            Some(i) => &label[..i + 1],
            None => label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bracket {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

fn brackets_with_mask(tree: &Tree, keep: &[bool], cfg: &EvalConfig) -> Vec<Bracket> {
    fn walk(t: &Tree, keep: &[bool], tok: &mut usize, pos: &mut usize, root: bool, cfg: &EvalConfig, out: &mut Vec<Bracket>) {
        if t.is_preterminal() {
            if keep[*tok] {
                *pos += 1;
            }
            *tok += 1;
            return;
        }
        let start = *pos;
        for c in &t.children {
            walk(c, keep, tok, pos, false, cfg, out);
        }
        if *pos > start && (cfg.count_root || !root) {
            out.push(Bracket { start, end: *pos, label: cfg.label(&t.label).to_string() });
        }
    }
    let mut out = Vec::new();
    walk(tree, keep, &mut 0, &mut 0, true, cfg, &mut out);
    out.sort();
    out
}

fn keep_mask(tree: &Tree, cfg: &EvalConfig) -> Vec<bool> {
    tree.tokens().iter().map(|t| !cfg.punct_pos_tags.contains(&t.pos)).collect()
}

/// Brackets of one tree after punctuation removal, sorted (a multiset).
pub fn scoring_brackets(tree: &Tree, cfg: &EvalConfig) -> Vec<Bracket> {
    brackets_with_mask(tree, &keep_mask(tree, cfg), cfg)
}

/// Size of the multiset intersection of two sorted bracket lists, also
/// tallied per label.
fn match_brackets(gold: &[Bracket], pred: &[Bracket], per_label: &mut BTreeMap<String, (usize, usize, usize)>) -> usize {
    for b in gold {
        per_label.entry(b.label.clone()).or_default().1 += 1;
    }
    for b in pred {
        per_label.entry(b.label.clone()).or_default().2 += 1;
    }
    let (mut i, mut j, mut matched) = (0, 0, 0);
    while i < gold.len() && j < pred.len() {
        match gold[i].cmp(&pred[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                per_label.entry(gold[i].label.clone()).or_default().0 += 1;
                matched += 1;
                i += 1;
                j += 1;
            }
        }
    }
    matched
}

fn check_pairs(golds: &[Tree], preds: &[Tree]) -> Result<()> {
    if golds.len() != preds.len() {
        return Err(MetricsError::CountMismatch { gold: golds.len(), pred: preds.len() });
    }
    for (i, (g, p)) in golds.iter().zip(preds).enumerate() {
        if g.words() != p.words() {
            return Err(MetricsError::YieldMismatch { index: i });
        }
    }
    Ok(())
}

/// Micro-averaged bracket scores, complete-match rate and PoS accuracy.
/// Punctuation positions are taken from the gold tree.
pub fn evalb_score(golds: &[Tree], preds: &[Tree], cfg: &EvalConfig) -> Result<MetricReport> {
    check_pairs(golds, preds)?;
    let mut r = MetricReport::default();
    let mut complete = 0;
    for (g, p) in golds.iter().zip(preds) {
        let keep = keep_mask(g, cfg);
        let kept = keep.iter().filter(|k| **k).count();
        if cfg.max_sentence_length_for_scoring.is_some_and(|cap| kept > cap) {
            continue;
        }
        let gb = brackets_with_mask(g, &keep, cfg);
        let pb = brackets_with_mask(p, &keep, cfg);
        let m = match_brackets(&gb, &pb, &mut r.per_label_counts);
        r.matched_brackets += m;
        r.gold_brackets += gb.len();
        r.predicted_brackets += pb.len();
        if gb == pb {
            complete += 1;
        }
        for ((gt, pt), k) in g.tags().iter().zip(p.tags()).zip(&keep) {
            if *k {
                r.pos_total += 1;
                r.pos_correct += usize::from(*gt == pt);
            }
        }
        r.n_sentences += 1;
    }
    r.finish(complete);
    Ok(r)
}

/// Share of non-punctuation tokens whose predicted tag matches gold.
/// Defined as 100 when there are no such tokens.
pub fn pos_accuracy(golds: &[Tree], preds: &[Tree], cfg: &EvalConfig) -> Result<f64> {
    Ok(evalb_score(golds, preds, cfg)?.pos_accuracy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::parse_bracketed;

    fn one(s: &str) -> Tree {
        parse_bracketed(s).unwrap().remove(0)
    }

    fn b(start: usize, end: usize, label: &str) -> Bracket {
        Bracket { start, end, label: label.into() }
    }

    fn dot() -> EvalConfig {
        EvalConfig::with_punct(["."])
    }

    #[test]
    fn punctuation_removed_before_extraction() {
        let t = one("(S (NP-SBJ (PRO he)) (. .))");
        assert_eq!(scoring_brackets(&t, &dot()), vec![b(0, 1, "NP-SBJ"), b(0, 1, "S")]);
    }

    #[test]
    fn no_punctuation_gives_internal_nodes() {
        let t = one("(S (NP (D the) (N dog)) (VP (V runs)))");
        let got = scoring_brackets(&t, &dot());
        assert_eq!(got.len(), t.internal_node_count());
    }

    #[test]
    fn unary_chains_not_merged_and_empty_dropped() {
        let t = one("(S (NP (NP (N x))) (PP (. .)))");
        assert_eq!(scoring_brackets(&t, &dot()), vec![b(0, 1, "NP"), b(0, 1, "NP"), b(0, 1, "S")]);
    }

    #[test]
    fn function_tags_are_atomic() {
        let g = one("(S (NP-SBJ (D the) (N dog)) (V runs))");
        let p = one("(S (NP (D the) (N dog)) (V runs))");
        let r = evalb_score(std::slice::from_ref(&g), std::slice::from_ref(&p), &dot()).unwrap();
        assert_eq!((r.matched_brackets, r.gold_brackets, r.predicted_brackets), (1, 2, 2));
        assert_eq!((r.precision, r.recall, r.f1), (50.0, 50.0, 50.0));
        let loose = EvalConfig { function_tags_atomic: false, ..dot() };
        assert_eq!(evalb_score(&[g], &[p], &loose).unwrap().f1, 100.0);
    }

    #[test]
    fn identical_lists_score_perfectly() {
        let ts = vec![one("(S (NP (D the) (N dog)) (VP (V runs)) (. .))"), one("(X (Y z))")];
        let r = evalb_score(&ts, &ts, &dot()).unwrap();
        assert_eq!((r.precision, r.recall, r.f1, r.complete_match_rate, r.pos_accuracy), (100.0, 100.0, 100.0, 100.0, 100.0));
        assert_eq!(r.to_key_value().lines().nth(2), Some("f1=100.00"));
    }

    #[test]
    fn pos_accuracy_counts() {
        let g = one("(S (A a) (B b) (C c) (D d) (. .))");
        let p = one("(S (A a) (B b) (X c) (D d) (Y .))");
        assert_eq!(pos_accuracy(&[g], &[p], &dot()).unwrap(), 75.0);
        let g = one("(S (. .) (. .))");
        let r = evalb_score(std::slice::from_ref(&g), std::slice::from_ref(&g), &dot()).unwrap();
        assert_eq!(r.pos_accuracy, 100.0);
        assert!(r.pos_vacuous);
    }

    #[test]
    fn yield_mismatch_reports_index() {
        let a = one("(S (N a))");
        let b = one("(S (N b))");
        assert_eq!(evalb_score(&[a.clone(), a.clone()], &[a, b], &dot()), Err(MetricsError::YieldMismatch { index: 1 }));
    }

    #[test]
    fn root_bracket_configurable() {
        let g = one("(S (NP (N a)) (V b))");
        let cfg = EvalConfig { count_root: false, ..dot() };
        assert_eq!(scoring_brackets(&g, &cfg), vec![b(0, 1, "NP")]);
    }

    #[test]
    fn length_cap_skips_sentences() {
        let long = one("(S (N a) (N b) (N c))");
        let short = one("(S (N a))");
        let cfg = EvalConfig { max_sentence_length_for_scoring: Some(2), ..dot() };
        let r = evalb_score(&[long.clone(), short.clone()], &[long, short], &cfg).unwrap();
        assert_eq!(r.n_sentences, 1);
    }
}
