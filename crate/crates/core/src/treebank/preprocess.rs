use regex::Regex;

use super::Tree;

/// Corpus cleaning settings.
#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    /// Sentences with more tokens are dropped.
    pub max_length: usize,
    /// Token forms that mark empty categories (traces, null pronouns).
    pub empty_leaf_patterns: Vec<Regex>,
    /// Trailing coindex suffix on labels.
    pub coindex_pattern: Regex,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            max_length: 100,
            // `*T*`, `*pro*`, `*T*-1`, and the bare `0` complementizer.
            empty_leaf_patterns: vec![Regex::new(r"^\*.*\*(-\d+)?$").unwrap(), Regex::new(r"^0$").unwrap()],
            coindex_pattern: Regex::new(r"[-=]\d+$").unwrap(),
        }
    }
}

impl PreprocessConfig {
    pub fn with_max_length(mut self, max_length: usize) -> Self {
        assert!(max_length >= 1, "max_length must be at least 1");
        self.max_length = max_length;
        self
    }

    fn is_empty_form(&self, form: &str) -> bool {
        self.empty_leaf_patterns.iter().any(|re| re.is_match(form))
    }

    fn strip_label(&self, label: &str) -> String {
        let mut cur = label.to_string();
        loop {
            let next = self.coindex_pattern.replace(&cur, "").into_owned();
            if next == cur || next.is_empty() {
                return cur;
            }
            cur = next;
        }
    }
}

/// Removes empty-category leaves (and any node they leave childless) and
/// strips coindex suffixes from labels. Token forms are never rewritten.
/// Returns `None` when nothing survives.
pub fn strip_empty_and_indices(tree: &Tree, cfg: &PreprocessConfig) -> Option<Tree> {
    fn walk(t: &Tree, cfg: &PreprocessConfig) -> Option<Tree> {
        let label = cfg.strip_label(&t.label);
        if let Some(tok) = &t.token {
            if cfg.is_empty_form(&tok.form) {
                return None;
            }
            return Some(Tree::preterminal(label, tok.form.clone(), tok.index));
        }
        let children: Vec<Tree> = t.children.iter().filter_map(|c| walk(c, cfg)).collect();
        if children.is_empty() {
            return None;
        }
        Some(Tree::internal(label, children))
    }
    let mut out = walk(tree, cfg)?;
    out.reindex();
    Some(out)
}

/// Drops trees longer than `cfg.max_length`, preserving order. Returns the
/// kept trees and the number removed.
pub fn filter_corpus(trees: Vec<Tree>, cfg: &PreprocessConfig) -> (Vec<Tree>, usize) {
    let before = trees.len();
    let kept: Vec<Tree> = trees.into_iter().filter(|t| t.len() <= cfg.max_length).collect();
    let removed = before - kept.len();
    (kept, removed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::{parse_bracketed, serialize};

    fn one(s: &str) -> Tree {
        parse_bracketed(s).unwrap().remove(0)
    }

    #[test]
    fn removes_traces_and_indices() {
        let cfg = PreprocessConfig::default();
        let t = one("(S (NP-SBJ-1 (PRO he)) (NP-1 (N *T*)))");
        let out = strip_empty_and_indices(&t, &cfg).unwrap();
        assert_eq!(serialize(&out), "(S (NP-SBJ (PRO he)))");
    }

    #[test]
    fn identity_when_clean() {
        let cfg = PreprocessConfig::default();
        let t = one("(S (NP-SBJ (D the) (N dog)) (VP (V runs)))");
        assert_eq!(strip_empty_and_indices(&t, &cfg).unwrap(), t);
    }

    #[test]
    fn fully_empty_tree() {
        let cfg = PreprocessConfig::default();
        assert_eq!(strip_empty_and_indices(&one("(NP (N *pro*))"), &cfg), None);
        assert_eq!(strip_empty_and_indices(&one("(CP (C 0))"), &cfg), None);
    }

    #[test]
    fn reindexes_and_keeps_forms() {
        let cfg = PreprocessConfig::default();
        let t = one("(S (NP (N *T*-2)) (NP=3 (N x-1)) (VP-12 (V y)))");
        let out = strip_empty_and_indices(&t, &cfg).unwrap();
        assert_eq!(serialize(&out), "(S (NP (N x-1)) (VP (V y)))");
        assert_eq!(out.tokens()[0].index, 0);
        out.validate().unwrap();
    }

    #[test]
    fn idempotent() {
        let cfg = PreprocessConfig::default();
        let t = one("(S (NP-SBJ-1-2 (PRO he)) (VP (V x) (NP (N *))) (NP (N *T*)))");
        let once = strip_empty_and_indices(&t, &cfg).unwrap();
        assert_eq!(strip_empty_and_indices(&once, &cfg).unwrap(), once);
    }

    fn of_len(n: usize) -> Tree {
        Tree::internal("S", (0..n).map(|i| Tree::preterminal("N", format!("w{i}"), i)).collect())
    }

    #[test]
    fn length_cap_is_inclusive() {
        let cfg = PreprocessConfig::default();
        let (kept, removed) = filter_corpus(vec![of_len(5), of_len(101), of_len(100)], &cfg);
        assert_eq!(kept.iter().map(Tree::len).collect::<Vec<_>>(), [5, 100]);
        assert_eq!(removed, 1);
        assert_eq!(filter_corpus(Vec::new(), &cfg), (Vec::new(), 0));
    }
}
