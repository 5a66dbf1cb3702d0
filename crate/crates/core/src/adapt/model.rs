use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{domain_classifier_loss, orthogonality_loss, AdaptError, DomainClassifier, FusionCoefficients, MatchingNetwork, Result};
use crate::chart::{Example, ParserHead, TagVocab};
use crate::encoder::{build_vocab, Encoder, EncoderOutput, Vocab};
use crate::multilingual::{LanguageSpec, ModelConfig};
use crate::tensor::{Graph, ParamStore, Tensor, Var};
use crate::treebank::{LabelVocab, Token, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DaMode {
    /// Shared plus own private encoder, summed.
    Baseline,
    /// Softmax-weighted fusion of the shared and every private encoder.
    DaFs,
    /// Baseline plus teacher-to-student feature matching.
    DaMsdm,
}

impl FromStr for DaMode {
    type Err = AdaptError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "da-fs" => Ok(Self::DaFs),
            "da-msdm" => Ok(Self::DaMsdm),
            other => Err(AdaptError::ModeMismatch(format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for DaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Baseline => "baseline",
            Self::DaFs => "da-fs",
            Self::DaMsdm => "da-msdm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub parse: f64,
    pub pos: f64,
    pub adv: f64,
    pub ort: f64,
    pub mat: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { parse: 1.0, pos: 1.0, adv: 1.0, ort: 0.1, mat: 0.1 }
    }
}

/// Shared encoder, one private encoder per domain, one parsing head.
#[derive(Debug, Clone)]
pub struct SharedPrivateModel {
    pub mode: DaMode,
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub domains: Vec<String>,
    pub shared: Encoder,
    pub private: Vec<Encoder>,
    pub head: ParserHead,
    pub classifier: DomainClassifier,
    pub fusion: Option<FusionCoefficients>,
    pub matching: Option<MatchingNetwork>,
    pub store: ParamStore,
}

/// Encoder outputs of one sentence and the representation given to the head.
#[derive(Debug, Clone)]
pub struct Representation {
    pub h: Var,
    pub shared: EncoderOutput,
    /// `(domain, output)` for each private encoder that was run.
    pub private: Vec<(usize, EncoderOutput)>,
}

impl SharedPrivateModel {
    /// `domains[0]` is the source. Vocabulary, labels and tags are collected
    /// over all training sets.
    pub fn new(mut config: ModelConfig, mode: DaMode, domains: &[&LanguageSpec]) -> Result<Self> {
        if domains.is_empty() {
            return Err(AdaptError::ModeMismatch("no domains".into()));
        }
        if mode == DaMode::DaMsdm && domains.len() < 2 {
            return Err(AdaptError::ModeMismatch("feature matching needs a source and at least one target".into()));
        }
        if let Some(d) = domains.iter().position(|d| d.train.is_empty()) {
            return Err(AdaptError::EmptyDomain(d));
        }
        let names: Vec<String> = domains.iter().map(|d| d.name.clone()).collect();
        if let Some((i, n)) = names.iter().enumerate().find(|(i, n)| names[..*i].contains(n)) {
            return Err(AdaptError::ModeMismatch(format!("domain `{n}` listed twice (position {i})")));
        }
        let train: Vec<&Tree> = domains.iter().flat_map(|d| d.train.iter()).collect();
        let sentences: Vec<Vec<String>> = train.iter().map(|t| t.words()).collect();
        let vocab = build_vocab(&sentences, config.min_count)?;
        config.encoder.vocab_size = vocab.len();

        let mut store = ParamStore::new();
        let seed = config.seed;
        let rng = |stream: u64| ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, stream));
        let shared = Encoder::new(&mut store, "shared", config.encoder.clone(), &mut rng(1))?;
        let private = (0..domains.len())
            .map(|d| Encoder::new(&mut store, &format!("private.{d}"), config.encoder.clone(), &mut rng(200 + d as u64)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let labels = LabelVocab::from_trees(train.iter().copied());
        let tags = TagVocab::from_trees(train.iter().copied());
        let dim = config.encoder.dim;
        let head = ParserHead::new(&mut store, "head", labels, tags, dim, &config.scorer, config.with_pos, crate::derive_seed(seed, 100))?;
        let classifier = DomainClassifier::new(&mut store, "domain", dim, domains.len(), &mut rng(300))?;
        let sizes: Vec<usize> = domains.iter().map(|d| d.train.len()).collect();
        let fusion = match mode {
            DaMode::DaFs => Some(FusionCoefficients::new(&mut store, "fusion", &sizes)?),
            _ => None,
        };
        let matching = match mode {
            DaMode::DaMsdm => {
                let layers = config.encoder.num_layers.max(1);
                Some(MatchingNetwork::new(&mut store, "matching", domains.len() - 1, 1, layers, layers, dim)?)
            }
            _ => None,
        };
        Ok(Self { mode, config, vocab, domains: names, shared, private, head, classifier, fusion, matching, store })
    }

    pub fn domain_index(&self, name: &str) -> Result<usize> {
        self.domains.iter().position(|d| d == name).ok_or_else(|| AdaptError::UnknownDomain(name.to_string()))
    }

    pub fn example(&self, tree: &Tree) -> Result<Example> {
        Ok(self.head.example(tree, &self.vocab)?)
    }

    pub fn represent(&self, g: &mut Graph, ids: &[usize], domain: usize) -> Result<Representation> {
        if domain >= self.domains.len() {
            return Err(AdaptError::UnknownDomain(domain.to_string()));
        }
        let shared = self.shared.forward(g, &self.store, ids)?;
        match &self.fusion {
            Some(fusion) => {
                let private = self.private.iter().map(|e| e.forward(g, &self.store, ids)).collect::<std::result::Result<Vec<_>, _>>()?;
                let outs: Vec<Var> = private.iter().map(|p| p.output).collect();
                let h = fusion.fuse(g, &self.store, shared.output, &outs, domain)?;
                Ok(Representation { h, shared, private: private.into_iter().enumerate().collect() })
            }
            None => {
                let own = self.private[domain].forward(g, &self.store, ids)?;
                let h = g.add(shared.output, own.output)?;
                Ok(Representation { h, shared, private: vec![(domain, own)] })
            }
        }
    }

    pub fn parse_tokens(&self, domain: usize, tokens: &[Token]) -> Result<Tree> {
        let forms: Vec<&str> = tokens.iter().map(|t| t.form.as_str()).collect();
        let ids = self.vocab.ids(&forms);
        let mut g = Graph::new();
        let rep = self.represent(&mut g, &ids, domain)?;
        Ok(self.head.predict(&mut g, &self.store, rep.h, tokens)?)
    }

    pub fn parse_trees(&self, domain: usize, trees: &[Tree]) -> Result<Vec<Tree>> {
        trees
            .iter()
            .map(|t| {
                let tokens: Vec<Token> = t.tokens().into_iter().cloned().collect();
                self.parse_tokens(domain, &tokens)
            })
            .collect()
    }
}

/// Unweighted components and the weighted total of one batch's loss.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    pub parse: Var,
    pub pos: Var,
    pub adv: Var,
    pub ort: Var,
    pub mat: Var,
    pub adv_active: bool,
}

fn mean_of(g: &mut Graph, xs: &[Var]) -> Result<Var> {
    if xs.is_empty() {
        return Ok(g.leaf(Tensor::scalar(0.0))?);
    }
    let mut t = xs[0];
    for &x in &xs[1..] {
        t = g.add(t, x)?;
    }
    Ok(g.scale(t, 1.0 / xs.len() as f64)?)
}

/// Loss of a batch of `(domain, example)` pairs. Parsing and tagging losses
/// are averaged over sentences; the domain classifier sees one mean-pooled,
/// gradient-reversed shared vector per sentence; the orthogonality penalty
/// pairs shared rows with the rows of each private encoder that ran on them;
/// the matching loss averages over target-domain sentences and is skipped
/// when its weight is zero.
pub fn total_loss(g: &mut Graph, model: &SharedPrivateModel, batch: &[(usize, &Example)], weights: &LossWeights) -> Result<LossParts> {
    let n = model.domains.len();
    let mut parse = Vec::with_capacity(batch.len());
    let mut pos = Vec::new();
    let mut pooled = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    let mut rows: Vec<(Vec<Var>, Vec<Var>)> = vec![(Vec::new(), Vec::new()); n];
    let mut mat = Vec::new();
    for &(d, ex) in batch {
        let rep = model.represent(g, &ex.word_ids, d)?;
        let (p, t) = model.head.losses(g, &model.store, rep.h, ex)?;
        parse.push(p);
        pos.extend(t);
        let rev = g.grl(rep.shared.output, 1.0)?;
        pooled.push(g.mean_rows(rev)?);
        labels.push(d);
        for (e, out) in &rep.private {
            rows[*e].0.push(rep.shared.output);
            rows[*e].1.push(out.output);
        }
        if let (Some(net), true) = (&model.matching, d > 0 && weights.mat != 0.0) {
            let student = rep.private[0].1.layers.clone();
            let teacher = model.private[0].forward(g, &model.store, &ex.word_ids)?;
            mat.push(net.loss(g, &model.store, &[(d - 1, student)], &[teacher.layers])?);
        }
    }
    let parse = mean_of(g, &parse)?;
    let pos = mean_of(g, &pos)?;
    let pooled = g.concat_rows(&pooled)?;
    let (adv, adv_active) = domain_classifier_loss(g, &model.store, &model.classifier, pooled, &labels)?;
    let mut pairs = Vec::new();
    for (hc, hp) in rows.iter().filter(|r| !r.0.is_empty()) {
        pairs.push((g.concat_rows(hc)?, g.concat_rows(hp)?));
    }
    let ort = orthogonality_loss(g, &pairs)?;
    let mat = mean_of(g, &mat)?;

    let mut total = g.scale(parse, weights.parse)?;
    for (v, w) in [(pos, weights.pos), (adv, weights.adv), (ort, weights.ort), (mat, weights.mat)] {
        if w != 0.0 {
            let t = g.scale(v, w)?;
            total = g.add(total, t)?;
        }
    }
    Ok(LossParts { total, parse, pos, adv, ort, mat, adv_active })
}
