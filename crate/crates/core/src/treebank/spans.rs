use super::{Result, Token, Tree, TreebankError};

/// Separator for collapsed unary chains, outermost label first.
pub const UNARY_JOIN: char = '+';

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

/// `(start, end, label)` with `None` standing for ∅.
pub type SpanAssignment = Vec<(usize, usize, Option<String>)>;

/// One span per internal node, in pre-order. Unary chains over the same
/// span collapse into a single `A+B` label.
pub fn tree_to_spans(tree: &Tree) -> Vec<LabeledSpan> {
    fn walk(t: &Tree, start: usize, out: &mut Vec<LabeledSpan>) -> usize {
        if t.is_preterminal() {
            return start + 1;
        }
        let mut label = t.label.clone();
        let mut node = t;
        while node.children.len() == 1 && !node.children[0].is_preterminal() {
            node = &node.children[0];
            label.push(UNARY_JOIN);
            label.push_str(&node.label);
        }
        let slot = out.len();
        out.push(LabeledSpan { start, end: start, label });
        let mut pos = start;
        for c in &node.children {
            pos = walk(c, pos, out);
        }
        out[slot].end = pos;
        pos
    }
    let mut out = Vec::new();
    walk(tree, 0, &mut out);
    out
}

/// Full binary bracketing of the tree: labeled spans from
/// [`tree_to_spans`] plus ∅ spans for every single token not already
/// labeled and for the right-branching groupings of n-ary nodes.
pub fn binarized_spans(tree: &Tree) -> SpanAssignment {
    fn walk(t: &Tree, start: usize, out: &mut SpanAssignment, labeled_leaf: bool) -> usize {
        if t.is_preterminal() {
            if !labeled_leaf {
                out.push((start, start + 1, None));
            }
            return start + 1;
        }
        let mut label = t.label.clone();
        let mut node = t;
        while node.children.len() == 1 && !node.children[0].is_preterminal() {
            node = &node.children[0];
            label.push(UNARY_JOIN);
            label.push_str(&node.label);
        }
        let slot = out.len();
        out.push((start, start, Some(label)));
        let single = node.children.len() == 1;
        let mut bounds = vec![start];
        let mut pos = start;
        for c in &node.children {
            pos = walk(c, pos, out, single);
            bounds.push(pos);
        }
        out[slot].1 = pos;
        // children c1..ck -> (c1, (c2, (... ck)))
        for &b in bounds.iter().take(node.children.len().saturating_sub(1)).skip(1) {
            out.push((b, pos, None));
        }
        pos
    }
    let mut out = Vec::new();
    walk(tree, 0, &mut out, false);
    out.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    out
}

/// Rebuilds a tree from a laminar span family over `tokens`. ∅ spans are
/// elided with their children promoted, `A+B` labels expand into unary
/// chains, and uncovered positions become preterminals of the enclosing
/// span.
pub fn spans_to_tree(assignment: &[(usize, usize, Option<String>)], tokens: &[Token]) -> Result<Tree> {
    let n = tokens.len();
    let mut spans: Vec<_> = assignment.to_vec();
    spans.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    for w in spans.windows(2) {
        if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
            return Err(TreebankError::NotLaminar(format!("duplicate span ({}, {})", w[0].0, w[0].1)));
        }
    }
    for s in &spans {
        if s.0 >= s.1 || s.1 > n {
            return Err(TreebankError::NotLaminar(format!("span ({}, {}) outside [0, {n})", s.0, s.1)));
        }
        if matches!(&s.2, Some(l) if l.is_empty() || l.split(UNARY_JOIN).any(str::is_empty)) {
            return Err(TreebankError::Invalid(format!("malformed label on span ({}, {})", s.0, s.1)));
        }
    }
    match spans.first() {
        Some((0, end, Some(_))) if *end == n && n > 0 => {}
        _ => return Err(TreebankError::MissingRoot { n }),
    }

    let leaf = |i: usize| Tree::preterminal(tokens[i].pos.clone(), tokens[i].form.clone(), i);

    fn build(spans: &[(usize, usize, Option<String>)], i: &mut usize, leaf: &dyn Fn(usize) -> Tree) -> Result<Vec<Tree>> {
        let (s, e, label) = spans[*i].clone();
        *i += 1;
        let mut kids = Vec::new();
        let mut cursor = s;
        while *i < spans.len() && spans[*i].0 < e {
            let (cs, ce) = (spans[*i].0, spans[*i].1);
            if ce > e || cs < cursor {
                return Err(TreebankError::NotLaminar(format!("span ({cs}, {ce}) crosses ({s}, {e})")));
            }
            kids.extend((cursor..cs).map(leaf));
            kids.extend(build(spans, i, leaf)?);
            cursor = ce;
        }
        kids.extend((cursor..e).map(leaf));
        Ok(match label {
            None => kids,
            Some(label) => {
                let mut parts: Vec<&str> = label.split(UNARY_JOIN).collect();
                let innermost = parts.pop().unwrap();
                let mut node = Tree::internal(innermost, kids);
                while let Some(outer) = parts.pop() {
                    node = Tree::internal(outer, vec![node]);
                }
                vec![node]
            }
        })
    }

    let mut i = 0;
    let mut roots = build(&spans, &mut i, &leaf)?;
    if i != spans.len() {
        let s = &spans[i];
        return Err(TreebankError::NotLaminar(format!("span ({}, {}) outside the root", s.0, s.1)));
    }
    debug_assert_eq!(roots.len(), 1);
    Ok(roots.remove(0))
}
