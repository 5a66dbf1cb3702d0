use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LanguageSpec, MultilingualError, Result};
use crate::chart::{ParserHead, ScorerConfig, TagVocab};
use crate::encoder::{build_vocab, Encoder, EncoderConfig, Vocab};
use crate::tensor::{load_checkpoint, save_checkpoint, DType, Graph, ParamStore};
use crate::treebank::{LabelVocab, Token, Tree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// `vocab_size` is filled in from the training data.
    pub encoder: EncoderConfig,
    pub scorer: ScorerConfig,
    pub with_pos: bool,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { encoder: EncoderConfig::default(), scorer: ScorerConfig::default(), with_pos: true, min_count: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HeadMeta {
    name: String,
    labels: LabelVocab,
    tags: TagVocab,
    with_pos: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    vocab: Vocab,
    heads: Vec<HeadMeta>,
}

/// Shared encoder with one parsing head per language.
#[derive(Debug, Clone)]
pub struct MultilingualParser {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub encoder: Encoder,
    pub languages: Vec<String>,
    pub heads: Vec<ParserHead>,
    pub store: ParamStore,
}

fn head_seed(seed: u64, index: usize) -> u64 {
    crate::derive_seed(seed, 100 + index as u64)
}

impl MultilingualParser {
    /// Builds the word vocabulary over every training set and each
    /// language's label and tag inventories from its own training trees.
    pub fn new(mut config: ModelConfig, languages: &[&LanguageSpec]) -> Result<Self> {
        let sentences: Vec<Vec<String>> = languages.iter().flat_map(|l| l.train.iter().map(Tree::words)).collect();
        let vocab = build_vocab(&sentences, config.min_count)?;
        config.encoder.vocab_size = vocab.len();
        let heads = languages
            .iter()
            .map(|l| HeadMeta {
                name: l.name.clone(),
                labels: LabelVocab::from_trees(&l.train),
                tags: TagVocab::from_trees(&l.train),
                with_pos: config.with_pos,
            })
            .collect();
        Self::assemble(config, vocab, heads)
    }

    fn assemble(config: ModelConfig, vocab: Vocab, metas: Vec<HeadMeta>) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(config.seed, 1));
        let encoder = Encoder::new(&mut store, "enc", config.encoder.clone(), &mut rng)?;
        let mut heads = Vec::new();
        let mut languages = Vec::new();
        for (i, m) in metas.into_iter().enumerate() {
            if languages.contains(&m.name) {
                return Err(MultilingualError::Config(format!("language `{}` listed twice", m.name)));
            }
            let head = ParserHead::new(
                &mut store,
                &format!("head.{}", m.name),
                m.labels,
                m.tags,
                config.encoder.dim,
                &config.scorer,
                m.with_pos,
                head_seed(config.seed, i),
            )?;
            heads.push(head);
            languages.push(m.name);
        }
        Ok(Self { config, vocab, encoder, languages, heads, store })
    }

    pub fn language_index(&self, name: &str) -> Result<usize> {
        self.languages.iter().position(|l| l == name).ok_or_else(|| MultilingualError::UnknownLanguage(name.to_string()))
    }

    /// Drops a language's head. Its parameters stay in the store unused.
    pub fn remove_language(&mut self, name: &str) -> Result<()> {
        let i = self.language_index(name)?;
        self.languages.remove(i);
        self.heads.remove(i);
        Ok(())
    }

    /// Adds unseen forms to the vocabulary; their embeddings start as copies
    /// of the UNK row. Returns the number added.
    pub fn extend_vocab<'a>(&mut self, words: impl IntoIterator<Item = &'a str>) -> Result<usize> {
        let added = self.vocab.extend(words);
        self.encoder.grow_vocab(&mut self.store, added)?;
        self.config.encoder.vocab_size = self.vocab.len();
        Ok(added)
    }

    /// Eval-mode parse of one sentence with language `lang`'s head.
    pub fn parse_tokens(&self, lang: usize, tokens: &[Token]) -> Result<Tree> {
        let forms: Vec<&str> = tokens.iter().map(|t| t.form.as_str()).collect();
        let ids = self.vocab.ids(&forms);
        let mut g = Graph::new();
        let out = self.encoder.forward(&mut g, &self.store, &ids)?;
        Ok(self.heads[lang].predict(&mut g, &self.store, out.output, tokens)?)
    }

    /// Parses the yields of `trees`, keeping their gold tags as the fallback
    /// when the head has no PoS classifier.
    pub fn parse_trees(&self, lang: usize, trees: &[Tree]) -> Result<Vec<Tree>> {
        trees
            .iter()
            .map(|t| {
                let tokens: Vec<Token> = t.tokens().into_iter().cloned().collect();
                self.parse_tokens(lang, &tokens)
            })
            .collect()
    }

    pub fn meta_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta");
        PathBuf::from(s)
    }

    /// Writes parameters to `path` (plus its manifest) and vocabularies and
    /// configuration to `<path>.meta`.
    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.store, DType::F64)?;
        let meta = Meta {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            heads: self
                .languages
                .iter()
                .zip(&self.heads)
                .map(|(name, h)| HeadMeta { name: name.clone(), labels: h.labels.clone(), tags: h.tags.clone(), with_pos: h.pos.is_some() })
                .collect(),
        };
        let json = serde_json::to_string_pretty(&meta).map_err(|e| MultilingualError::Meta(e.to_string()))?;
        fs::write(Self::meta_path(path), json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(Self::meta_path(path))?;
        let meta: Meta = serde_json::from_str(&text).map_err(|e| MultilingualError::Meta(e.to_string()))?;
        let mut model = Self::assemble(meta.config, meta.vocab, meta.heads)?;
        let entries = load_checkpoint(path)?;
        if entries.len() != model.store.len() {
            return Err(MultilingualError::Meta(format!(
                "checkpoint holds {} parameters, model expects {}",
                entries.len(),
                model.store.len()
            )));
        }
        model.store.load_entries(&entries)?;
        Ok(model)
    }
}
