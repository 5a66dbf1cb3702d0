//! Hand-counted bracket pairs and an independent bracket counter.

use std::collections::HashMap;

use spanparse::treebank::{parse_bracketed, Tree};

/// `(gold, predicted, matched, gold brackets, predicted brackets)`, counted
/// by hand with punctuation removed, function tags kept and the root counted.
pub const PAIRS: [(&str, &str, usize, usize, usize); 20] = [
    ("(S (NP (D de) (N coninc)) (VP (V sach)) (PUNC .))", "(S (NP (D de) (N coninc)) (VP (V sach)) (PUNC .))", 3, 3, 3),
    ("(S (NP-SBJ (PRO hi)) (VP (V sliep)))", "(S (NP (PRO hi)) (VP (V sliep)))", 2, 3, 3),
    ("(S (VP (V riep)))", "(S (V riep))", 1, 2, 1),
    ("(S (NP (NPR jan)) (VP (V quam)))", "(S (NP (NPR jan) (V quam)))", 1, 3, 2),
    ("(S (NP (PRO hi)) (VP (V sach) (NP (PRO si))) (PUNC .))", "(S (NP (PRO hi)) (VP (V sach) (NP (PRO si)) (PUNC .)))", 4, 4, 4),
    ("(S (NP (PRO hi)) (VP (V sliep)) (X (PUNC .)))", "(S (NP (PRO hi)) (VP (V sliep)) (PUNC .))", 3, 3, 3),
    ("(S (NP (D de) (N heer)) (VP (V sprac)))", "(S (VP (D de) (N heer)) (VP (V sprac)))", 2, 3, 3),
    ("(S (NP (D de) (ADJP (ADJ goede)) (N heer)) (VP (V sliep)))", "(S (D de) (ADJ goede) (N heer) (V sliep))", 1, 4, 1),
    ("(S (NP (NP (PRO hi))) (VP (V sliep)))", "(S (NP (PRO hi)) (VP (V sliep)))", 3, 4, 3),
    ("(S (PUNC ;) (NP (PRO wi)) (VP (V quam)))", "(S (PUNC ;) (NP (PRO wi) (V quam)))", 1, 3, 2),
    ("(S (NP (D de) (N coninc) (PUNC ;)) (VP (V quam)) (PUNC .))", "(S (NP (D de) (N coninc)) (PUNC ;) (VP (V quam) (PUNC .)))", 3, 3, 3),
    ("(S (NP-SBJ (PRO hi)) (VP (V sach) (NP-OBJ (PRO si))))", "(S (NP-OBJ (PRO hi)) (VP (V sach) (NP-SBJ (PRO si))))", 2, 4, 4),
    ("(S (NP (D de) (N heer)) (VP (V gaf) (NP (D het) (N zwaert))))", "(S (NP (D de) (N heer) (V gaf)) (NP (D het) (N zwaert)))", 2, 4, 3),
    ("(S (CP-THT (C dat) (S (VP (V quam)))))", "(S (CP-THT (C dat) (VP (V quam))))", 3, 4, 3),
    ("(S (NP (PRO ic)) (VP (V loech)))", "(FRAG (NP (PRO ic)) (VP (V loech)))", 2, 3, 3),
    ("(S (PUNC ;) (NP (PRO du)) (PUNC .))", "(S (NP (PUNC ;) (PRO du)) (PUNC .))", 2, 2, 2),
    ("(S (ADVP-TMP (ADV doe)) (NP-SBJ (PRO hi)) (VP (V ghinc)))", "(S (ADVP (ADV doe)) (NP-SBJ (PRO hi)) (VP (V ghinc)))", 3, 4, 4),
    ("(S (NP (PRO hi)) (VP (V sliep)))", "(S (NP (NP (PRO hi))) (VP (VP (V sliep))))", 3, 3, 5),
    (
        "(S (NP-SBJ (PRO hi)) (VP (V sach)) (CONJ ende) (VP (V loech)) (PUNC .))",
        "(S (NP-SBJ (PRO hi)) (VP (VP (V sach)) (CONJ ende) (VP (V loech))) (PUNC .))",
        4,
        4,
        5,
    ),
    ("(NP (D de) (N hooft) (PP-POS (PG vander) (NP (N vrouwe))))", "(NP (NP (D de) (N hooft)) (PP-POS (PG vander) (N vrouwe)))", 2, 3, 3),
];

pub fn tree(s: &str) -> Tree {
    parse_bracketed(s).unwrap().remove(0)
}

/// Deletes punctuation leaves (and nodes left empty), then lists every
/// internal node's token range.
pub fn oracle_brackets(t: &Tree, punct: &[&str], strip_function_tags: bool) -> HashMap<(usize, usize, String), usize> {
    fn prune(t: &Tree, punct: &[&str]) -> Option<Tree> {
        if t.is_preterminal() {
            return (!punct.contains(&t.label.as_str())).then(|| t.clone());
        }
        let kids: Vec<Tree> = t.children.iter().filter_map(|c| prune(c, punct)).collect();
        (!kids.is_empty()).then(|| Tree { label: t.label.clone(), children: kids, token: None })
    }
    fn collect(t: &Tree, start: usize, strip: bool, out: &mut HashMap<(usize, usize, String), usize>) -> usize {
        if t.is_preterminal() {
            return start + 1;
        }
        let end = t.children.iter().fold(start, |pos, c| collect(c, pos, strip, out));
        let label = if strip { t.label.split(['-', '=']).next().unwrap().to_string() } else { t.label.clone() };
        *out.entry((start, end, label)).or_default() += 1;
        end
    }
    let mut out = HashMap::new();
    if let Some(p) = prune(t, punct) {
        collect(&p, 0, strip_function_tags, &mut out);
    }
    out
}

pub fn oracle_counts(g: &Tree, p: &Tree, strip: bool) -> (usize, usize, usize) {
    let punct = ["PUNC", ".", ",", ":", ";", "``", "''"];
    let gb = oracle_brackets(g, &punct, strip);
    let pb = oracle_brackets(p, &punct, strip);
    let matched = gb.iter().map(|(k, n)| (*n).min(pb.get(k).copied().unwrap_or(0))).sum();
    (matched, gb.values().sum(), pb.values().sum())
}
