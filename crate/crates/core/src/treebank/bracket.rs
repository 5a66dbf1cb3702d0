use super::{Result, Tree, TreebankError, UNARY_JOIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn lex(text: &str) -> Vec<(Tok<'_>, usize)> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            '(' => {
                out.push((Tok::Open, i));
                chars.next();
            }
            ')' => {
                out.push((Tok::Close, i));
                chars.next();
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let start = i;
                let mut end = text.len();
                while let Some(&(j, c)) = chars.peek() {
                    if c == '(' || c == ')' || c.is_whitespace() {
                        end = j;
                        break;
                    }
                    chars.next();
                }
                out.push((Tok::Atom(&text[start..end]), start));
            }
        }
    }
    out
}

struct Parser<'a> {
    toks: Vec<(Tok<'a>, usize)>,
    pos: usize,
    words: usize,
    text_len: usize,
}

enum Child {
    Tree(Tree),
    Word(String),
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<(Tok<'a>, usize)> {
        self.toks.get(self.pos).copied()
    }

    /// Parses one bracket starting at an `(`. Returns `None` for the label
    /// when the bracket is unlabeled.
    fn node(&mut self) -> Result<(Option<String>, Vec<Child>, usize)> {
        let (_, open_at) = self.toks[self.pos];
        self.pos += 1;
        let label = match self.peek() {
            Some((Tok::Atom(a), offset)) => {
                if a.contains(UNARY_JOIN) {
                    return Err(TreebankError::ReservedChar { label: a.to_string(), offset });
                }
                self.pos += 1;
                Some(a.to_string())
            }
            _ => None,
        };
        let mut children = Vec::new();
        loop {
            match self.peek() {
                None => return Err(TreebankError::Unbalanced { offset: self.text_len }),
                Some((Tok::Close, _)) => {
                    self.pos += 1;
                    break;
                }
                Some((Tok::Open, _)) => {
                    let (l, kids, at) = self.node()?;
                    children.push(Child::Tree(self.build(l, kids, at, false)?));
                }
                Some((Tok::Atom(a), _)) => {
                    self.pos += 1;
                    children.push(Child::Word(a.to_string()));
                }
            }
        }
        Ok((label, children, open_at))
    }

    fn build(&mut self, label: Option<String>, children: Vec<Child>, at: usize, top: bool) -> Result<Tree> {
        let n_words = children.iter().filter(|c| matches!(c, Child::Word(_))).count();
        let n_trees = children.len() - n_words;
        let Some(label) = label else {
            if top && n_words == 0 && n_trees == 1 {
                let Some(Child::Tree(t)) = children.into_iter().next() else { unreachable!() };
                return Ok(t);
            }
            return Err(TreebankError::EmptyLabel { offset: at });
        };
        if n_words > 0 && n_trees > 0 {
            return Err(TreebankError::MixedChildren { offset: at });
        }
        if n_trees == 0 {
            if n_words != 1 {
                return Err(TreebankError::PreterminalWords { offset: at, count: n_words });
            }
            let Some(Child::Word(form)) = children.into_iter().next() else { unreachable!() };
            let t = Tree::preterminal(label, form, self.words);
            self.words += 1;
            return Ok(t);
        }
        let kids = children
            .into_iter()
            .map(|c| match c {
                Child::Tree(t) => t,
                Child::Word(_) => unreachable!(),
            })
            .collect();
        Ok(Tree::internal(label, kids))
    }
}

/// Reads every top-level tree from a bracketed corpus. Both `(S ...)` and
/// the wrapped `( (S ...) )` styles are accepted.
pub fn parse_bracketed(text: &str) -> Result<Vec<Tree>> {
    let mut p = Parser { toks: lex(text), pos: 0, words: 0, text_len: text.len() };
    let mut trees = Vec::new();
    while let Some((tok, offset)) = p.peek() {
        match tok {
            Tok::Open => {
                p.words = 0;
                let (label, kids, at) = p.node()?;
                trees.push(p.build(label, kids, at, true)?);
            }
            Tok::Close => return Err(TreebankError::Unbalanced { offset }),
            Tok::Atom(a) => return Err(TreebankError::Unexpected { found: a.to_string(), offset }),
        }
    }
    Ok(trees)
}

/// Single-line bracketed form, single spaces, no outer wrapper.
pub fn serialize(tree: &Tree) -> String {
    fn write(t: &Tree, out: &mut String) {
        out.push('(');
        out.push_str(&t.label);
        match &t.token {
            Some(tok) => {
                out.push(' ');
                out.push_str(&tok.form);
            }
            None => {
                for c in &t.children {
                    out.push(' ');
                    write(c, out);
                }
            }
        }
        out.push(')');
    }
    let mut out = String::new();
    write(tree, &mut out);
    out
}

/// One tree per line, newline-terminated.
pub fn serialize_corpus<'a>(trees: impl IntoIterator<Item = &'a Tree>) -> String {
    let mut out = String::new();
    for t in trees {
        out.push_str(&serialize(t));
        out.push('\n');
    }
    out
}
