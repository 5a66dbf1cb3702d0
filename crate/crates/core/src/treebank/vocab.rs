use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{tree_to_spans, Tree};

/// Id of the empty label ∅.
pub const EMPTY_LABEL_ID: usize = 0;

/// Bijection between span labels and ids, with id 0 reserved for ∅.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct LabelVocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for LabelVocab {
    fn default() -> Self {
        Self::new()
    }
}

impl LabelVocab {
    pub fn new() -> Self {
        Self { labels: vec![String::new()], index: HashMap::new() }
    }

    /// Returns the id of `label`, inserting it if new.
    pub fn add(&mut self, label: &str) -> usize {
        assert!(!label.is_empty(), "the empty label is reserved");
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), self.labels.len() - 1);
        self.labels.len() - 1
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// `None` for ∅.
    pub fn label(&self, id: usize) -> Option<&str> {
        if id == EMPTY_LABEL_ID {
            None
        } else {
            self.labels.get(id).map(String::as_str)
        }
    }

    /// Number of ids including ∅.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.len() == 1
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &str)> {
        self.labels.iter().enumerate().skip(1).map(|(i, l)| (i, l.as_str()))
    }

    /// Every (chain-merged) span label in `trees`, sorted.
    pub fn from_trees<'a>(trees: impl IntoIterator<Item = &'a Tree>) -> Self {
        let mut labels = std::collections::BTreeSet::new();
        for t in trees {
            labels.extend(tree_to_spans(t).into_iter().map(|s| s.label));
        }
        let mut v = LabelVocab::new();
        for l in &labels {
            v.add(l);
        }
        v
    }
}

impl From<Vec<String>> for LabelVocab {
    fn from(labels: Vec<String>) -> Self {
        let mut v = LabelVocab::new();
        for l in labels.iter().skip(1) {
            v.add(l);
        }
        v
    }
}

impl From<LabelVocab> for Vec<String> {
    fn from(v: LabelVocab) -> Self {
        v.labels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_label_is_zero() {
        let mut v = LabelVocab::new();
        assert_eq!(v.label(EMPTY_LABEL_ID), None);
        let np = v.add("NP-SBJ");
        assert_eq!(np, 1);
        assert_eq!(v.add("NP-SBJ"), 1);
        assert_eq!(v.add("S+NP"), 2);
        assert_eq!(v.label(2), Some("S+NP"));
        assert_eq!(v.len(), 3);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<LabelVocab>(&json).unwrap(), v);
    }

    #[test]
    fn collected_from_trees() {
        let t = crate::treebank::parse_bracketed("(S (NP (N a)) (VP (V b) (NP (N c))))").unwrap();
        let v = LabelVocab::from_trees(&t);
        assert_eq!(v.iter().map(|(_, l)| l).collect::<Vec<_>>(), ["NP", "S", "VP"]);
    }
}
