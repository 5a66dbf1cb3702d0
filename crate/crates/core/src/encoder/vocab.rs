use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{EncoderError, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
const PAD_FORM: &str = "<pad>";
const UNK_FORM: &str = "<unk>";

/// Word-level vocabulary with reserved PAD and UNK ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    forms: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(forms: Vec<String>) -> Self {
        let index = forms.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect();
        Vocab { forms, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.forms
    }
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.len() <= 2
    }

    /// Id of `form`, or [`UNK`].
    pub fn id(&self, form: &str) -> usize {
        self.index.get(form).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, form: &str) -> bool {
        self.index.contains_key(form)
    }

    pub fn form(&self, id: usize) -> &str {
        &self.forms[id]
    }

    pub fn ids<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }

    /// Appends unseen forms in first-occurrence order; returns how many were
    /// added.
    pub fn extend<S: AsRef<str>>(&mut self, forms: impl IntoIterator<Item = S>) -> usize {
        let before = self.forms.len();
        for f in forms {
            let f = f.as_ref();
            if !self.index.contains_key(f) {
                self.index.insert(f.to_string(), self.forms.len());
                self.forms.push(f.to_string());
            }
        }
        self.forms.len() - before
    }
}

/// Builds a vocabulary from tokenized sentences. Forms seen at least
/// `min_count` times get ids after PAD and UNK, ordered by descending
/// frequency and then lexicographically.
pub fn build_vocab<S: AsRef<str>>(corpora: &[Vec<S>], min_count: usize) -> Result<Vocab> {
    if corpora.is_empty() {
        return Err(EncoderError::EmptyCorpus);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for sent in corpora {
        for w in sent {
            *counts.entry(w.as_ref()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut forms = vec![PAD_FORM.to_string(), UNK_FORM.to_string()];
    forms.extend(kept.into_iter().map(|(f, _)| f.to_string()));
    Ok(Vocab::from(forms))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Vec<&'static str>> {
        vec!["a a b".split(' ').collect()]
    }

    #[test]
    fn ordering_rule() {
        let v = build_vocab(&corpus(), 1).unwrap();
        assert_eq!((v.id("<pad>"), v.id("<unk>"), v.id("a"), v.id("b")), (0, 1, 2, 3));
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn threshold_maps_rare_to_unk() {
        let v = build_vocab(&corpus(), 2).unwrap();
        assert_eq!(v.id("b"), UNK);
        assert_eq!(v.id("a"), 2);
    }

    #[test]
    fn deterministic_and_errors() {
        let c = vec![vec!["z", "y", "x", "y"], vec!["x", "w"]];
        assert_eq!(build_vocab(&c, 1).unwrap(), build_vocab(&c, 1).unwrap());
        assert_eq!(build_vocab(&c, 1).unwrap().form(2), "x");
        let empty: Vec<Vec<&str>> = Vec::new();
        assert!(matches!(build_vocab(&empty, 1), Err(EncoderError::EmptyCorpus)));
    }

    #[test]
    fn extend_appends_new_forms() {
        let mut v = build_vocab(&corpus(), 1).unwrap();
        assert_eq!(v.extend(["b", "c", "d", "c"]), 2);
        assert_eq!(v.id("d"), 5);
    }
}
