use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{ExperimentError, FoldPlan, Result};
use crate::adapt::{AdvWarmup, DaConfig, DaMode, LossWeights};
use crate::metrics::EvalConfig;
use crate::multilingual::{MixingStrategy, ModelConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    ZeroShot,
    FineTune,
    Combined,
    DaFs,
    DaMsdm,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "zero-shot" => Ok(Self::ZeroShot),
            "fine-tune" => Ok(Self::FineTune),
            "combined" => Ok(Self::Combined),
            "da-fs" => Ok(Self::DaFs),
            "da-msdm" => Ok(Self::DaMsdm),
            _ => Err(format!("unknown mode `{s}`")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ZeroShot => "zero-shot",
            Self::FineTune => "fine-tune",
            Self::Combined => "combined",
            Self::DaFs => "da-fs",
            Self::DaMsdm => "da-msdm",
        })
    }
}

impl Mode {
    pub fn da_mode(self) -> Option<DaMode> {
        match self {
            Self::DaFs => Some(DaMode::DaFs),
            Self::DaMsdm => Some(DaMode::DaMsdm),
            _ => None,
        }
    }
}

/// Everything one experiment needs. Read from flat `section.key = value`
/// text; paths are relative to the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub phase: u8,
    pub mode: Option<Mode>,
    pub seed: u64,
    pub main: Option<PathBuf>,
    /// Explicit dev and test sets for `main`; without them `main` is split
    /// by the fold plan.
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub aux: Vec<(String, PathBuf)>,
    pub targets: Vec<(String, PathBuf)>,
    pub checkpoint: Option<PathBuf>,
    pub max_length: Option<usize>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Epochs for fine-tuning, which has no dev set.
    pub finetune_epochs: usize,
    pub folds: FoldPlan,
    pub runs: usize,
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub weights: LossWeights,
    pub warmup: AdvWarmup,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            phase: 1,
            mode: None,
            seed: 0,
            main: None,
            dev: None,
            test: None,
            aux: Vec::new(),
            targets: Vec::new(),
            checkpoint: None,
            max_length: None,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            finetune_epochs: 50,
            folds: FoldPlan::default(),
            runs: 10,
            sizes: vec![10, 100, 200],
            repeats: 10,
            weights: LossWeights::default(),
            warmup: AdvWarmup::default(),
            output: PathBuf::from("results"),
        }
    }
}

fn value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| ExperimentError::Config { line, msg: format!("bad value `{v}` for `{key}`") })
}

fn list<T: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| value(line, key, s)).collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        let path = |v: &str| base.join(v);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.split('#').next().unwrap_or("").trim();
            if l.is_empty() {
                continue;
            }
            let (key, v) = l
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| ExperimentError::Config { line, msg: format!("expected `key = value`, found `{l}`") })?;
            if !seen.insert(key.to_string()) {
                return Err(ExperimentError::Config { line, msg: format!("duplicate key `{key}`") });
            }
            let m = &mut cfg;
            match key {
                "experiment.name" => m.name = v.to_string(),
                "experiment.phase" => m.phase = value(line, key, v)?,
                "experiment.mode" => {
                    m.mode = Some(v.parse().map_err(|msg| ExperimentError::Config { line, msg })?);
                }
                "experiment.seed" => m.seed = value(line, key, v)?,
                "data.main" => m.main = Some(path(v)),
                "data.dev" => m.dev = Some(path(v)),
                "data.test" => m.test = Some(path(v)),
                "data.max_length" => m.max_length = Some(value(line, key, v)?),
                "model.checkpoint" => m.checkpoint = Some(path(v)),
                "model.pos" => m.model.with_pos = value(line, key, v)?,
                "model.min_count" => m.model.min_count = value(line, key, v)?,
                "encoder.dim" => m.model.encoder.dim = value(line, key, v)?,
                "encoder.layers" => m.model.encoder.num_layers = value(line, key, v)?,
                "encoder.heads" => m.model.encoder.num_heads = value(line, key, v)?,
                "encoder.ff_dim" => m.model.encoder.ff_dim = value(line, key, v)?,
                "encoder.dropout" => m.model.encoder.dropout_rate = value(line, key, v)?,
                "encoder.max_positions" => m.model.encoder.max_positions = value(line, key, v)?,
                "scorer.hidden" => m.model.scorer.hidden = value(line, key, v)?,
                "train.lr" => m.train.learning_rate = value(line, key, v)?,
                "train.batch_size" => m.train.mixing.batch_size = value(line, key, v)?,
                "train.max_epochs" => m.train.max_epochs = value(line, key, v)?,
                "train.patience" => m.train.patience = value(line, key, v)?,
                "train.clip_norm" => {
                    m.train.clip_norm = if v == "none" { None } else { Some(value(line, key, v)?) };
                }
                "train.mixing" => {
                    m.train.mixing.strategy = match v {
                        "proportional" => MixingStrategy::Proportional,
                        "uniform" => MixingStrategy::Uniform,
                        _ => return Err(ExperimentError::Config { line, msg: format!("unknown mixing `{v}`") }),
                    }
                }
                "train.temperature" => m.train.mixing.temperature = value(line, key, v)?,
                "train.parse_weight" => m.train.parse_weight = value(line, key, v)?,
                "train.pos_weight" => m.train.pos_weight = value(line, key, v)?,
                "train.finetune_epochs" => m.finetune_epochs = value(line, key, v)?,
                "crossval.folds" => m.folds.n_folds = value(line, key, v)?,
                "crossval.runs" => m.runs = value(line, key, v)?,
                "resample.sizes" => m.sizes = list(line, key, v)?,
                "resample.repeats" => m.repeats = value(line, key, v)?,
                "da.adv" => m.weights.adv = value(line, key, v)?,
                "da.ort" => m.weights.ort = value(line, key, v)?,
                "da.mat" => m.weights.mat = value(line, key, v)?,
                "da.warmup" => m.warmup.fraction = value(line, key, v)?,
                "eval.punct" => m.train.eval.punct_pos_tags = list(line, key, v)?.into_iter().collect(),
                "eval.function_tags" => m.train.eval.function_tags_atomic = value(line, key, v)?,
                "eval.count_root" => m.train.eval.count_root = value(line, key, v)?,
                "eval.max_length" => m.train.eval.max_sentence_length_for_scoring = Some(value(line, key, v)?),
                "output.dir" => m.output = path(v),
                _ => {
                    if let Some(name) = key.strip_prefix("data.aux.") {
                        m.aux.push((name.to_string(), path(v)));
                    } else if let Some(name) = key.strip_prefix("data.target.") {
                        m.targets.push((name.to_string(), path(v)));
                    } else {
                        return Err(ExperimentError::Config { line, msg: format!("unknown key `{key}`") });
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io { path: path.to_path_buf(), source: e })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ExperimentError::Config { line: 0, msg });
        match (self.phase, self.mode) {
            (1 | 2, Some(m)) => return bad(format!("mode `{m}` needs phase 3")),
            (3, None) => return bad("phase 3 needs experiment.mode".into()),
            (1..=3, _) => {}
            (p, _) => return bad(format!("unknown phase {p}")),
        }
        if self.phase == 1 && !self.aux.is_empty() {
            return bad("phase 1 takes no auxiliary treebanks".into());
        }
        if self.phase == 2 && self.aux.is_empty() {
            return bad("phase 2 needs at least one data.aux.<name>".into());
        }
        if self.phase == 3 && self.targets.is_empty() {
            return bad("phase 3 needs at least one data.target.<name>".into());
        }
        if self.mode == Some(Mode::DaMsdm) && self.targets.is_empty() {
            return bad("da-msdm needs a target domain".into());
        }
        if self.mode == Some(Mode::DaMsdm) && self.sizes.contains(&0) {
            return bad("da-msdm needs target training data; remove 0 from resample.sizes".into());
        }
        if self.runs == 0 || self.runs > self.folds.n_folds {
            return bad(format!("crossval.runs must be in 1..={}", self.folds.n_folds));
        }
        if self.repeats == 0 {
            return bad("resample.repeats must be positive".into());
        }
        if self.dev.is_some() != self.test.is_some() {
            return bad("data.dev and data.test go together".into());
        }
        Ok(())
    }

    pub fn model_config(&self, seed: u64) -> ModelConfig {
        ModelConfig { seed, ..self.model.clone() }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let mut t = self.train.clone();
        t.seed = crate::derive_seed(seed, 7);
        t.mixing.seed = crate::derive_seed(seed, 8);
        t
    }

    pub fn da_config(&self, mode: DaMode, seed: u64) -> DaConfig {
        DaConfig {
            mode,
            weights: LossWeights { parse: self.train.parse_weight, pos: self.train.pos_weight, ..self.weights },
            warmup: self.warmup,
            batch_size: self.train.mixing.batch_size,
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            learning_rate: self.train.learning_rate,
            clip_norm: self.train.clip_norm,
            seed: crate::derive_seed(seed, 9),
            eval: self.eval().clone(),
        }
    }

    pub fn eval(&self) -> &EvalConfig {
        &self.train.eval
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_paths() {
        let text = "# phase three\nexperiment.phase = 3\nexperiment.mode = da-fs\nexperiment.seed = 7\n\
                    data.main = src.mrg\ndata.target.north = n.mrg  # comment\ndata.target.south = s.mrg\n\
                    encoder.dim = 32\ntrain.lr = 0.01\nresample.sizes = 10, 100\nda.ort = 0.5\neval.punct = PUNC,.\n";
        let c = ExperimentConfig::parse(text, Path::new("/data")).unwrap();
        assert_eq!(c.mode, Some(Mode::DaFs));
        assert_eq!(c.main, Some(PathBuf::from("/data/src.mrg")));
        assert_eq!(c.targets.len(), 2);
        assert_eq!(c.targets[1].0, "south");
        assert_eq!(c.model.encoder.dim, 32);
        assert_eq!(c.train.learning_rate, 0.01);
        assert_eq!(c.sizes, vec![10, 100]);
        assert_eq!(c.weights.ort, 0.5);
        assert_eq!(c.finetune_epochs, 50);
        assert_eq!(c.train.eval.punct_pos_tags.len(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        let err = |t: &str| ExperimentConfig::parse(t, Path::new(".")).unwrap_err().to_string();
        assert!(err("experiment.phase = 1\nfoo.bar = 1\n").contains("unknown key"));
        assert!(err("experiment.phase = 1\nexperiment.phase = 2\n").contains("duplicate"));
        assert!(err("encoder.dim = big\n").contains("bad value"));
        assert!(err("no equals sign\n").contains("expected"));
        assert!(err("experiment.phase = 1\nexperiment.mode = combined\n").contains("phase 3"));
        assert!(err("experiment.phase = 3\n").contains("mode"));
        assert!(err("experiment.phase = 2\n").contains("aux"));
        assert!(err("experiment.phase = 1\ndata.aux.x = x\n").contains("phase 1"));
        assert!(err("experiment.phase = 1\nexperiment.mode = warp\n").contains("unknown mode"));
        let msdm = "experiment.phase = 3\nexperiment.mode = da-msdm\ndata.target.n = n\nresample.sizes = 0, 10\n";
        assert!(err(msdm).contains("target training data"));
    }
}
