use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{joint_batch_stream, LanguageSpec, MixingSchedule, ModelConfig, MultilingualError, MultilingualParser, Result, Split};
use crate::chart::{ChartError, Example};
use crate::metrics::{evalb_score, EvalConfig, MetricReport};
use crate::tensor::{Graph, Optimizer, Tensor};
use crate::treebank::Tree;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mixing: MixingSchedule,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub clip_norm: Option<f64>,
    pub parse_weight: f64,
    pub pos_weight: f64,
    /// Seed of the dropout stream.
    pub seed: u64,
    pub eval: EvalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mixing: MixingSchedule::default(),
            max_epochs: 30,
            patience: 5,
            learning_rate: 3e-3,
            clip_norm: Some(5.0),
            parse_weight: 1.0,
            pos_weight: 1.0,
            seed: 0,
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_f1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_dev_f1: Option<f64>,
    /// Training trees dropped because a head cannot represent them.
    pub skipped: usize,
}

/// Keeps the best-scoring parameter snapshot and says when to stop.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(f64, usize, Vec<Tensor>)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, since_best: 0 }
    }

    /// Records `score` for `epoch`; returns true when training should stop.
    pub fn observe(&mut self, score: f64, epoch: usize, snapshot: impl FnOnce() -> Vec<Tensor>) -> bool {
        if self.best.as_ref().is_none_or(|b| score > b.0) {
            self.best = Some((score, epoch, snapshot()));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        self.since_best >= self.patience
    }

    /// `(score, epoch, parameters)` of the best epoch.
    pub fn into_best(self) -> Option<(f64, usize, Vec<Tensor>)> {
        self.best
    }
}

fn prepare(model: &MultilingualParser, lang: usize, trees: &[Tree], skipped: &mut usize) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(trees.len());
    for t in trees {
        match model.heads[lang].example(t, &model.vocab) {
            Ok(ex) => out.push(ex),
            Err(ChartError::UnknownLabel(_)) => *skipped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

/// Micro-averaged scores of `lang`'s head on `golds`.
pub fn evaluate_trees(model: &MultilingualParser, lang: usize, golds: &[Tree], cfg: &EvalConfig) -> Result<MetricReport> {
    let preds = model.parse_trees(lang, golds)?;
    Ok(evalb_score(golds, &preds, cfg)?)
}

pub fn evaluate_language(model: &MultilingualParser, lang: &LanguageSpec, split: Split, cfg: &EvalConfig) -> Result<MetricReport> {
    let idx = model.language_index(&lang.name)?;
    evaluate_trees(model, idx, lang.split(split), cfg)
}

/// One optimization step on a monolingual batch; returns the batch loss.
fn step(
    model: &mut MultilingualParser,
    lang: usize,
    batch: &[&Example],
    cfg: &TrainConfig,
    opt: &mut Optimizer,
    rng: &mut Option<ChaCha8Rng>,
) -> Result<f64> {
    let mut g = Graph::new().train_mode(rng.take().expect("dropout stream"));
    let mut total = None;
    for ex in batch {
        let out = model.encoder.forward(&mut g, &model.store, &ex.word_ids)?;
        let (parse, pos) = model.heads[lang].losses(&mut g, &model.store, out.output, ex)?;
        let mut l = g.scale(parse, cfg.parse_weight)?;
        if let Some(p) = pos {
            let p = g.scale(p, cfg.pos_weight)?;
            l = g.add(l, p)?;
        }
        total = Some(match total {
            None => l,
            Some(t) => g.add(t, l)?,
        });
    }
    let loss = g.scale(total.expect("nonempty batch"), 1.0 / batch.len() as f64)?;
    model.store.zero_grad();
    g.backward(loss, &mut model.store)?;
    opt.step(&mut model.store);
    *rng = g.take_rng();
    Ok(g.value(loss).item())
}

/// Shared loop. With `dev`, runs up to `max_epochs` with early stopping on
/// that head's dev F1 and restores the best epoch; without, runs exactly
/// `fixed_epochs`. An epoch is as many batches as one pass over every
/// training set would take.
fn train_loop(
    model: &mut MultilingualParser,
    data: &[(usize, Vec<Example>)],
    dev: Option<(usize, &[Tree])>,
    fixed_epochs: Option<usize>,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    let sizes: Vec<usize> = data.iter().map(|d| d.1.len()).collect();
    let mut stream = joint_batch_stream(&sizes, &cfg.mixing)?;
    let batch = cfg.mixing.batch_size;
    let steps_per_epoch: usize = sizes.iter().map(|n| n.div_ceil(batch)).sum();
    let mut opt = Optimizer::adam(cfg.learning_rate);
    if let Some(c) = cfg.clip_norm {
        opt = opt.with_clip_norm(c);
    }
    let mut rng = Some(ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut log = TrainLog::default();
    let mut stopper = EarlyStopping::new(cfg.patience.max(1));
    let epochs = fixed_epochs.unwrap_or(cfg.max_epochs);
    for epoch in 1..=epochs {
        let mut loss_sum = 0.0;
        for _ in 0..steps_per_epoch {
            let (l, idx) = stream.next().expect("endless stream");
            let (lang, examples) = &data[l];
            let items: Vec<&Example> = idx.iter().map(|&i| &examples[i]).collect();
            loss_sum += step(model, *lang, &items, cfg, &mut opt, &mut rng)?;
        }
        let mut entry = EpochLog { epoch, mean_loss: loss_sum / steps_per_epoch as f64, dev_f1: None };
        let mut stop = false;
        if let (Some((lang, trees)), None) = (dev, fixed_epochs) {
            let f1 = evaluate_trees(model, lang, trees, &cfg.eval)?.f1;
            entry.dev_f1 = Some(f1);
            stop = stopper.observe(f1, epoch, || model.store.snapshot());
        }
        log.epochs.push(entry);
        if stop {
            break;
        }
    }
    match stopper.into_best() {
        Some((f1, epoch, params)) => {
            model.store.restore(&params);
            log.best_epoch = epoch;
            log.best_dev_f1 = Some(f1);
        }
        None => log.best_epoch = log.epochs.len(),
    }
    Ok(log)
}

/// Trains a fresh model on `main` plus `aux` languages, stopping early on
/// `main`'s dev F1.
pub fn train_joint(
    main: &LanguageSpec,
    aux: &[LanguageSpec],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(MultilingualParser, TrainLog)> {
    if main.dev.is_empty() {
        return Err(MultilingualError::NoDev(main.name.clone()));
    }
    let mut langs = vec![main];
    langs.extend(aux.iter());
    for l in &langs {
        if l.train.is_empty() {
            return Err(MultilingualError::EmptyTrain(l.name.clone()));
        }
    }
    let mut model = MultilingualParser::new(model_cfg.clone(), &langs)?;
    let mut skipped = 0;
    let data = langs.iter().enumerate().map(|(i, l)| Ok((i, prepare(&model, i, &l.train, &mut skipped)?))).collect::<Result<Vec<_>>>()?;
    let mut log = train_loop(&mut model, &data, Some((0, &main.dev)), None, cfg)?;
    log.skipped = skipped;
    Ok((model, log))
}

/// Continues training `lang`'s head and the shared encoder on `trees` for
/// exactly `epochs` epochs. Unseen words are added to the vocabulary first.
pub fn fine_tune(model: &mut MultilingualParser, lang: &str, trees: &[Tree], epochs: usize, cfg: &TrainConfig) -> Result<TrainLog> {
    let idx = model.language_index(lang)?;
    if trees.is_empty() || epochs == 0 {
        return Ok(TrainLog::default());
    }
    let words: Vec<String> = trees.iter().flat_map(Tree::words).collect();
    model.extend_vocab(words.iter().map(String::as_str))?;
    let mut skipped = 0;
    let examples = prepare(model, idx, trees, &mut skipped)?;
    if examples.is_empty() {
        return Ok(TrainLog { skipped, ..TrainLog::default() });
    }
    let mut log = train_loop(model, &[(idx, examples)], None, Some(epochs), cfg)?;
    log.skipped = skipped;
    Ok(log)
}
