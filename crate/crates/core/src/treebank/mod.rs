//! Penn-style bracketed constituency trees.
//!
//! Labels are atomic strings: `NP-SBJ` is one label, never `NP` plus a tag.
//! Spans are half-open token intervals `[start, end)`.

mod bracket;
mod preprocess;
mod spans;
mod vocab;

pub use bracket::{parse_bracketed, serialize, serialize_corpus};
pub use preprocess::{filter_corpus, strip_empty_and_indices, PreprocessConfig};
pub use spans::{binarized_spans, spans_to_tree, tree_to_spans, LabeledSpan, SpanAssignment, UNARY_JOIN};
pub use vocab::{LabelVocab, EMPTY_LABEL_ID};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreebankError {
    #[error("unbalanced parentheses at offset {offset}")]
    Unbalanced { offset: usize },
    #[error("empty label at offset {offset}")]
    EmptyLabel { offset: usize },
    #[error("preterminal at offset {offset} has {count} word tokens, expected 1")]
    PreterminalWords { offset: usize, count: usize },
    #[error("node at offset {offset} mixes words and subtrees")]
    MixedChildren { offset: usize },
    #[error("label `{label}` at offset {offset} contains the reserved character `+`")]
    ReservedChar { label: String, offset: usize },
    #[error("unexpected `{found}` at offset {offset}")]
    Unexpected { found: String, offset: usize },
    #[error("span assignment is not a laminar family: {0}")]
    NotLaminar(String),
    #[error("span assignment does not cover [0, {n}) with a labeled root")]
    MissingRoot { n: usize },
    #[error("invalid tree: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, TreebankError>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub form: String,
    pub pos: String,
    /// 0-based position among retained tokens.
    pub index: usize,
}

/// A constituency tree node. Preterminals carry exactly one token and no
/// children; their label is the PoS tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tree {
    pub label: String,
    pub children: Vec<Tree>,
    pub token: Option<Token>,
}

impl Tree {
    pub fn preterminal(pos: impl Into<String>, form: impl Into<String>, index: usize) -> Self {
        let pos = pos.into();
        Tree { label: pos.clone(), children: Vec::new(), token: Some(Token { form: form.into(), pos, index }) }
    }

    pub fn internal(label: impl Into<String>, children: Vec<Tree>) -> Self {
        Tree { label: label.into(), children, token: None }
    }

    pub fn is_preterminal(&self) -> bool {
        self.token.is_some()
    }

    /// Tokens in left-to-right order.
    pub fn tokens(&self) -> Vec<&Token> {
        let mut out = Vec::new();
        self.collect_tokens(&mut out);
        out
    }

    fn collect_tokens<'a>(&'a self, out: &mut Vec<&'a Token>) {
        match &self.token {
            Some(t) => out.push(t),
            None => self.children.iter().for_each(|c| c.collect_tokens(out)),
        }
    }

    pub fn words(&self) -> Vec<String> {
        self.tokens().into_iter().map(|t| t.form.clone()).collect()
    }

    pub fn tags(&self) -> Vec<String> {
        self.tokens().into_iter().map(|t| t.pos.clone()).collect()
    }

    /// Yield length.
    pub fn len(&self) -> usize {
        match self.token {
            Some(_) => 1,
            None => self.children.iter().map(Tree::len).sum(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Renumbers token indices left to right from 0.
    pub fn reindex(&mut self) {
        fn walk(t: &mut Tree, next: &mut usize) {
            if let Some(tok) = t.token.as_mut() {
                tok.index = *next;
                *next += 1;
            } else {
                t.children.iter_mut().for_each(|c| walk(c, next));
            }
        }
        walk(self, &mut 0);
    }

    pub fn internal_node_count(&self) -> usize {
        if self.is_preterminal() {
            0
        } else {
            1 + self.children.iter().map(Tree::internal_node_count).sum::<usize>()
        }
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        fn walk(t: &Tree, next: &mut usize) -> Result<()> {
            if t.label.is_empty() {
                return Err(TreebankError::Invalid("empty label".into()));
            }
            match &t.token {
                Some(tok) => {
                    if !t.children.is_empty() {
                        return Err(TreebankError::Invalid(format!("preterminal `{}` has children", t.label)));
                    }
                    if tok.form.is_empty() || tok.pos.is_empty() {
                        return Err(TreebankError::Invalid("empty form or tag".into()));
                    }
                    if tok.index != *next {
                        return Err(TreebankError::Invalid(format!("token `{}` has index {}, expected {}", tok.form, tok.index, next)));
                    }
                    *next += 1;
                }
                None => {
                    if t.children.is_empty() {
                        return Err(TreebankError::Invalid(format!("internal node `{}` has no children", t.label)));
                    }
                    for c in &t.children {
                        walk(c, next)?;
                    }
                }
            }
            Ok(())
        }
        let mut n = 0;
        walk(self, &mut n)?;
        if n == 0 {
            return Err(TreebankError::Invalid("empty yield".into()));
        }
        Ok(())
    }
}

impl std::fmt::Display for Tree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&serialize(self))
    }
}
