//! Probabilistic grammars for synthetic treebanks.
//!
//! Text format, one item per line, `#` starts a comment:
//!
//! ```text
//! start S
//! [rules]
//! S -> NP-SBJ VP PUNC 0.9
//! [lexicon]
//! N -> dog 0.5
//! [rules north]
//! VP -> NP-OBJ V 0.3
//! [lexicon north]
//! N -> dogge 1.0
//! ```
//!
//! A symbol with a function tag (`NP-SBJ`) expands like its base category
//! (`NP`) unless it has rules of its own. A domain `[rules d]` line replaces
//! or adds one rule and its left-hand side is renormalized; a domain
//! `[lexicon d]` block replaces the whole word distribution of each tag it
//! mentions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ExperimentError, Result};
use crate::treebank::Tree;

const SUM_TOLERANCE: f64 = 1e-9;
/// Expected subtree size above which a grammar counts as non-terminating.
const MAX_EXPECTED_SIZE: f64 = 1e4;
const MAX_ATTEMPTS: usize = 10_000;

type Dist<T> = Vec<(T, f64)>;

#[derive(Debug, Clone, Default, PartialEq)]
struct Overlay {
    rules: Vec<(String, Vec<String>, f64)>,
    lexicon: BTreeMap<String, Dist<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pcfg {
    start: String,
    rules: BTreeMap<String, Dist<Vec<String>>>,
    lexicon: BTreeMap<String, Dist<String>>,
    domains: BTreeMap<String, Overlay>,
}

fn grammar_err(line: usize, msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Grammar { line, msg: msg.into() }
}

fn base_category(symbol: &str) -> Option<&str> {
    symbol.get(1..)?.find(['-', '=']).map(|i| &symbol[..i + 1])
}

impl Pcfg {
    pub fn parse(text: &str) -> Result<Self> {
        let mut g = Pcfg { start: "S".into(), rules: BTreeMap::new(), lexicon: BTreeMap::new(), domains: BTreeMap::new() };
        enum Section {
            Rules(Option<String>),
            Lexicon(Option<String>),
        }
        let mut section = Section::Rules(None);
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(inner) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let mut parts = inner.split_whitespace();
                let kind = parts.next().unwrap_or("");
                let domain = parts.next().map(str::to_string);
                if parts.next().is_some() {
                    return Err(grammar_err(lineno, "section header takes at most a domain name"));
                }
                if let Some(d) = &domain {
                    g.domains.entry(d.clone()).or_default();
                }
                section = match kind {
                    "rules" => Section::Rules(domain),
                    "lexicon" => Section::Lexicon(domain),
                    other => return Err(grammar_err(lineno, format!("unknown section `{other}`"))),
                };
                continue;
            }
            if let Some(sym) = line.strip_prefix("start ") {
                g.start = sym.trim().to_string();
                continue;
            }
            let (lhs, rest) = line.split_once("->").ok_or_else(|| grammar_err(lineno, "expected `LHS -> RHS... prob`"))?;
            let lhs = lhs.trim();
            let mut rhs: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
            let prob: f64 =
                rhs.pop().and_then(|p| p.parse().ok()).ok_or_else(|| grammar_err(lineno, "missing or malformed probability"))?;
            if lhs.is_empty() || lhs.contains(char::is_whitespace) || rhs.is_empty() {
                return Err(grammar_err(lineno, "empty side in rule"));
            }
            if !(0.0..=1.0).contains(&prob) {
                return Err(grammar_err(lineno, format!("probability {prob} outside [0, 1]")));
            }
            match &section {
                Section::Rules(None) => g.rules.entry(lhs.to_string()).or_default().push((rhs, prob)),
                Section::Rules(Some(d)) => g.domains.get_mut(d).unwrap().rules.push((lhs.to_string(), rhs, prob)),
                Section::Lexicon(domain) => {
                    if rhs.len() != 1 {
                        return Err(grammar_err(lineno, "lexicon entries take exactly one word"));
                    }
                    let target = match domain {
                        None => &mut g.lexicon,
                        Some(d) => &mut g.domains.get_mut(d).unwrap().lexicon,
                    };
                    target.entry(lhs.to_string()).or_default().push((rhs.remove(0), prob));
                }
            }
        }
        g.check()?;
        for d in g.domains.keys() {
            g.for_domain(Some(d))?;
        }
        Ok(g)
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.domains.keys().map(String::as_str)
    }

    /// Every word any domain can emit.
    pub fn words(&self) -> BTreeSet<&str> {
        let base = self.lexicon.values().flatten().map(|(w, _)| w.as_str());
        let over = self.domains.values().flat_map(|o| o.lexicon.values().flatten()).map(|(w, _)| w.as_str());
        base.chain(over).collect()
    }

    fn resolve<'a>(&'a self, symbol: &'a str) -> Option<&'a Dist<Vec<String>>> {
        self.rules.get(symbol).or_else(|| base_category(symbol).and_then(|b| self.rules.get(b)))
    }

    fn is_preterminal(&self, symbol: &str) -> bool {
        !self.rules.contains_key(symbol) && self.lexicon.contains_key(symbol)
    }

    /// Sums, symbol coverage and termination.
    fn check(&self) -> Result<()> {
        for (lhs, dist) in &self.rules {
            check_sum(lhs, dist.iter().map(|d| d.1))?;
        }
        for (tag, dist) in &self.lexicon {
            check_sum(tag, dist.iter().map(|d| d.1))?;
        }
        if self.resolve(&self.start).is_none() {
            return Err(ExperimentError::Grammar { line: 0, msg: format!("start symbol `{}` has no rules", self.start) });
        }
        let mut symbols: BTreeSet<&str> = self.rules.keys().map(String::as_str).collect();
        for dist in self.rules.values() {
            for (rhs, _) in dist {
                for s in rhs {
                    if self.resolve(s).is_none() && !self.lexicon.contains_key(s) {
                        return Err(ExperimentError::Grammar { line: 0, msg: format!("symbol `{s}` is never defined") });
                    }
                    if !self.is_preterminal(s) {
                        symbols.insert(s);
                    }
                }
            }
        }
        // Expected subtree size e(A) = 1 + sum_r p(r) sum_{B in r} e(B),
        // iterated from zero; it converges iff the grammar terminates.
        let symbols: Vec<&str> = symbols.into_iter().collect();
        let index: BTreeMap<&str, usize> = symbols.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let mut e = vec![0.0; symbols.len()];
        for _ in 0..100_000 {
            let mut next = vec![1.0; symbols.len()];
            for (i, s) in symbols.iter().enumerate() {
                for (rhs, p) in self.resolve(s).unwrap() {
                    next[i] += p * rhs.iter().map(|b| index.get(b.as_str()).map_or(1.0, |&j| e[j])).sum::<f64>();
                }
            }
            let delta = next.iter().zip(&e).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            e = next;
            if e.iter().any(|v| *v > MAX_EXPECTED_SIZE) {
                break;
            }
            if delta < 1e-9 {
                return Ok(());
            }
        }
        Err(ExperimentError::NotFinite)
    }

    /// The grammar with `domain`'s overlay applied (`None` for the base).
    pub fn for_domain(&self, domain: Option<&str>) -> Result<Pcfg> {
        let Some(name) = domain else {
            let mut g = self.clone();
            g.domains.clear();
            return Ok(g);
        };
        let overlay = self.domains.get(name).ok_or_else(|| ExperimentError::UnknownDomain(name.to_string()))?;
        let mut g = Pcfg { start: self.start.clone(), rules: self.rules.clone(), lexicon: self.lexicon.clone(), domains: BTreeMap::new() };
        let mut touched = BTreeSet::new();
        for (lhs, rhs, p) in &overlay.rules {
            // a tagged symbol without own rules starts from its base rules
            if !g.rules.contains_key(lhs) {
                let inherited = self.resolve(lhs).cloned().unwrap_or_default();
                g.rules.insert(lhs.clone(), inherited);
            }
            let dist = g.rules.get_mut(lhs).unwrap();
            match dist.iter_mut().find(|(r, _)| r == rhs) {
                Some(entry) => entry.1 = *p,
                None => dist.push((rhs.clone(), *p)),
            }
            touched.insert(lhs.clone());
        }
        for lhs in touched {
            normalize(g.rules.get_mut(&lhs).unwrap());
        }
        for (tag, dist) in &overlay.lexicon {
            let mut d = dist.clone();
            normalize(&mut d);
            g.lexicon.insert(tag.clone(), d);
        }
        g.check()?;
        Ok(g)
    }

    /// Adds `domain` with a lexicon overlay in which roughly `rate` of all
    /// words get a variant spelling.
    pub fn add_spelling_variants(&mut self, domain: &str, rate: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let taken: BTreeSet<String> = self.words().into_iter().map(str::to_string).collect();
        let mut used = taken.clone();
        let overlay = self.domains.entry(domain.to_string()).or_default();
        for (tag, dist) in &self.lexicon {
            if tag == "PUNC" {
                continue;
            }
            let mut changed = false;
            let respelled: Dist<String> = dist
                .iter()
                .map(|(w, p)| {
                    if rng.gen::<f64>() >= rate {
                        return (w.clone(), *p);
                    }
                    let mut v = respell(w, &mut rng);
                    while used.contains(&v) {
                        v.push('h');
                    }
                    used.insert(v.clone());
                    changed = true;
                    (v, *p)
                })
                .collect();
            if changed {
                overlay.lexicon.insert(tag.clone(), respelled);
            }
        }
    }

    /// Adds or replaces a rule probability in `domain`'s overlay.
    pub fn add_domain_rule(&mut self, domain: &str, lhs: &str, rhs: &[&str], prob: f64) {
        let overlay = self.domains.entry(domain.to_string()).or_default();
        overlay.rules.push((lhs.to_string(), rhs.iter().map(|s| s.to_string()).collect(), prob));
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("start {}\n[rules]\n", self.start);
        let rule_lines = |s: &mut String, rules: &mut dyn Iterator<Item = (&String, &Vec<String>, f64)>| {
            for (lhs, rhs, p) in rules {
                let _ = writeln!(s, "{lhs} -> {} {p}", rhs.join(" "));
            }
        };
        rule_lines(&mut s, &mut self.rules.iter().flat_map(|(l, d)| d.iter().map(move |(r, p)| (l, r, *p))));
        s.push_str("[lexicon]\n");
        for (tag, dist) in &self.lexicon {
            for (w, p) in dist {
                let _ = writeln!(s, "{tag} -> {w} {p}");
            }
        }
        for (name, o) in &self.domains {
            if !o.rules.is_empty() {
                let _ = writeln!(s, "[rules {name}]");
                rule_lines(&mut s, &mut o.rules.iter().map(|(l, r, p)| (l, r, *p)));
            }
            if !o.lexicon.is_empty() {
                let _ = writeln!(s, "[lexicon {name}]");
                for (tag, dist) in &o.lexicon {
                    for (w, p) in dist {
                        let _ = writeln!(s, "{tag} -> {w} {p}");
                    }
                }
            }
        }
        s
    }

    fn sample_symbol<R: Rng>(&self, symbol: &str, rng: &mut R, budget: &mut usize) -> Option<Tree> {
        if let Some(words) = self.lexicon.get(symbol).filter(|_| !self.rules.contains_key(symbol)) {
            if *budget == 0 {
                return None;
            }
            *budget -= 1;
            return Some(Tree::preterminal(symbol, draw(words, rng).clone(), 0));
        }
        let rhs = draw(self.resolve(symbol)?, rng);
        let mut children = Vec::with_capacity(rhs.len());
        for s in rhs {
            children.push(self.sample_symbol(s, rng, budget)?);
        }
        Some(Tree::internal(symbol, children))
    }

    /// Samples one tree of at most `max_length` tokens by rejection.
    pub fn sample<R: Rng>(&self, rng: &mut R, max_length: usize) -> Result<Tree> {
        for _ in 0..MAX_ATTEMPTS {
            let mut budget = max_length;
            if let Some(mut t) = self.sample_symbol(&self.start, rng, &mut budget) {
                t.reindex();
                return Ok(t);
            }
        }
        Err(ExperimentError::LengthCap(max_length))
    }
}

fn check_sum(lhs: &str, probs: impl Iterator<Item = f64>) -> Result<()> {
    let total: f64 = probs.sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(ExperimentError::Grammar { line: 0, msg: format!("probabilities for `{lhs}` sum to {total}") });
    }
    Ok(())
}

fn normalize<T>(dist: &mut Dist<T>) {
    let total: f64 = dist.iter().map(|d| d.1).sum();
    for d in dist.iter_mut() {
        d.1 /= total;
    }
}

fn draw<'a, T, R: Rng>(dist: &'a Dist<T>, rng: &mut R) -> &'a T {
    let mut u = rng.gen::<f64>();
    for (item, p) in dist {
        if u < *p {
            return item;
        }
        u -= p;
    }
    &dist.last().unwrap().0
}

/// Orthographic variation of the kind found across regional spellings.
fn respell<R: Rng>(word: &str, rng: &mut R) -> String {
    const SWAPS: [(&str, &str); 8] =
        [("c", "k"), ("ae", "aa"), ("ij", "y"), ("u", "ou"), ("s", "z"), ("gh", "g"), ("o", "oe"), ("e", "ee")];
    let start = rng.gen_range(0..SWAPS.len());
    for k in 0..SWAPS.len() {
        let (from, to) = SWAPS[(start + k) % SWAPS.len()];
        if word.contains(from) {
            return word.replacen(from, to, 1);
        }
    }
    format!("{word}e")
}

/// Samples `n` trees from `domain` (or the base grammar), seeded.
pub fn synth_generate(grammar: &Pcfg, n: usize, domain: Option<&str>, seed: u64, max_length: usize) -> Result<Vec<Tree>> {
    let g = grammar.for_domain(domain)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| g.sample(&mut rng, max_length)).collect()
}

fn uniform(tag: &str, words: &str) -> String {
    let ws: Vec<&str> = words.split_whitespace().collect();
    let p = 1.0 / ws.len() as f64;
    ws.iter().map(|w| format!("{tag} -> {w} {p}\n")).collect()
}

/// Base grammar of the built-in suite: declarative clauses with subjects,
/// objects, locative and genitive modifiers, relative and complement
/// clauses, plus rare verb-final and imperative orders.
pub fn builtin_grammar() -> Pcfg {
    let mut text = String::from(
        "start S
[rules]
S -> NP-SBJ VP PUNC 0.5
S -> NP-SBJ VP 0.1
S -> ADVP-TMP NP-SBJ VP PUNC 0.1
S -> NP-SBJ VP CP-ADV PUNC 0.1
S -> VP PUNC 0.05
S -> VP 0.05
S -> NP-SBJ VP CONJ VP PUNC 0.1
NP -> D N 0.35
NP -> D ADJP N 0.15
NP -> PRO 0.15
NP -> NPR 0.1
NP -> D N PP-POS 0.1
NP -> NUM N 0.05
NP -> D N CP-REL 0.05
NP -> N 0.05
PP -> P NP 1.0
PP-POS -> PG NP 1.0
VP -> V NP-OBJ 0.3
VP -> V 0.15
VP -> V NP-OBJ PP-LOC 0.15
VP -> V PP-LOC 0.1
VP -> MD VP 0.08
VP -> V ADJP-PRD 0.07
VP -> V CP-THT 0.05
VP -> ADV V NP-OBJ 0.05
VP -> NP-OBJ V 0.05
ADJP -> ADJ 0.75
ADJP -> ADV ADJ 0.25
ADVP -> ADV 1.0
CP-ADV -> CADV S 1.0
CP-THT -> C S 1.0
CP-REL -> WPRO VP 1.0
[lexicon]
",
    );
    for (tag, words) in [
        ("D", "de het een dese elc sine"),
        (
            "N",
            "coninc ridder vrouwe borch lant zwaert perd bode brief kerke heer knape stat poorte zee schip vader \
             moeder kint broeder suster coopman gelt wijn broot hof tafel camere venster bosch velt wech dach nacht \
             tijt woort dinc hant hooft herte",
        ),
        ("NPR", "jan pieter machtelt aernout willem katrine ghent brugghe ypre hollant"),
        ("PRO", "hi si wi ghi ic du men"),
        ("V", "sach gaf nam sprac quam ghinc screef bouwde vant hoorde brachte sende loech weende sliep riep maecte coste hilt leet"),
        ("MD", "sal mach wille moet can"),
        ("ADJ", "goet quaet groot cleine scone oude jonge rike arme wise edel stille"),
        ("ADV", "seere oec nu doe daer hier dicke gerne"),
        ("P", "in op ute met bi over onder tote"),
        ("PG", "van vander"),
        ("C", "dat"),
        ("CADV", "als want omdat eer"),
        ("WPRO", "die dien wies"),
        ("NUM", "twee drie vier vijf sesse"),
        ("CONJ", "ende of mer"),
        ("PUNC", ". ;"),
    ] {
        text.push_str(&uniform(tag, words));
    }
    Pcfg::parse(&text).expect("built-in grammar is valid")
}

/// The built-in grammar plus two shifted domains, `north` and `south`, each
/// with respelled words and its own word-order preferences.
pub fn builtin_suite() -> Pcfg {
    let mut g = builtin_grammar();
    g.add_spelling_variants("north", 0.5, 101);
    g.add_domain_rule("north", "VP", &["NP-OBJ", "V"], 0.3);
    g.add_domain_rule("north", "S", &["ADVP-TMP", "VP", "NP-SBJ", "PUNC"], 0.15);
    g.add_domain_rule("north", "NP", &["D", "N", "PP-POS"], 0.2);
    g.add_spelling_variants("south", 0.4, 202);
    g.add_domain_rule("south", "NP", &["D", "N", "ADJP"], 0.15);
    g.add_domain_rule("south", "VP", &["PP-LOC", "V", "NP-OBJ"], 0.2);
    g.add_domain_rule("south", "S", &["NP-SBJ", "VP", "PUNC"], 0.3);
    g
}
