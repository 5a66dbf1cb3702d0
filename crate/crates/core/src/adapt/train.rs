use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{balanced_batch_sampler, total_loss, AdaptError, AdvWarmup, DaMode, LossWeights, Result, SharedPrivateModel};
use crate::chart::{ChartError, Example};
use crate::metrics::{evalb_score, EvalConfig, MetricReport};
use crate::multilingual::{EarlyStopping, EpochLog, LanguageSpec, ModelConfig, TrainLog};
use crate::tensor::{Graph, Optimizer};
use crate::treebank::Tree;

#[derive(Debug, Clone, PartialEq)]
pub struct DaConfig {
    pub mode: DaMode,
    pub weights: LossWeights,
    pub warmup: AdvWarmup,
    /// Must be a multiple of the number of domains.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub eval: EvalConfig,
}

impl Default for DaConfig {
    fn default() -> Self {
        Self {
            mode: DaMode::Baseline,
            weights: LossWeights::default(),
            warmup: AdvWarmup::default(),
            batch_size: 16,
            max_epochs: 30,
            patience: 5,
            learning_rate: 3e-3,
            clip_norm: Some(5.0),
            seed: 0,
            eval: EvalConfig::default(),
        }
    }
}

pub fn evaluate_domain(model: &SharedPrivateModel, domain: usize, golds: &[Tree], cfg: &EvalConfig) -> Result<MetricReport> {
    let preds = model.parse_trees(domain, golds)?;
    Ok(evalb_score(golds, &preds, cfg)?)
}

/// Trains a shared-private model on `domains` (source first) with balanced
/// batches, stopping early on the source dev F1. An epoch is
/// `ceil(total training sentences / batch_size)` steps; the adversarial
/// weight warms up over the first part of `max_epochs` worth of steps.
pub fn train_shared_private(domains: &[LanguageSpec], model_cfg: &ModelConfig, cfg: &DaConfig) -> Result<(SharedPrivateModel, TrainLog)> {
    let source = domains.first().ok_or(AdaptError::EmptyDomain(0))?;
    if source.dev.is_empty() {
        return Err(AdaptError::NoDev);
    }
    let refs: Vec<&LanguageSpec> = domains.iter().collect();
    let mut model = SharedPrivateModel::new(model_cfg.clone(), cfg.mode, &refs)?;
    let mut log = TrainLog::default();
    let mut data: Vec<Vec<Example>> = Vec::with_capacity(domains.len());
    for (d, spec) in domains.iter().enumerate() {
        let mut ex = Vec::with_capacity(spec.train.len());
        for t in &spec.train {
            match model.example(t) {
                Ok(e) => ex.push(e),
                Err(AdaptError::Chart(ChartError::UnknownLabel(_))) => log.skipped += 1,
                Err(e) => return Err(e),
            }
        }
        if ex.is_empty() {
            return Err(AdaptError::EmptyDomain(d));
        }
        data.push(ex);
    }
    let sizes: Vec<usize> = data.iter().map(Vec::len).collect();
    let mut sampler = balanced_batch_sampler(&sizes, cfg.batch_size, cfg.seed)?;
    let steps_per_epoch = sizes.iter().sum::<usize>().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.max_epochs;
    let mut opt = Optimizer::adam(cfg.learning_rate);
    if let Some(c) = cfg.clip_norm {
        opt = opt.with_clip_norm(c);
    }
    let mut rng = Some(ChaCha8Rng::seed_from_u64(crate::derive_seed(cfg.seed, 1000)));
    let mut stopper = EarlyStopping::new(cfg.patience.max(1));
    let mut step = 0;
    for epoch in 1..=cfg.max_epochs {
        let mut loss_sum = 0.0;
        for _ in 0..steps_per_epoch {
            let batch = sampler.next().expect("endless sampler");
            let items: Vec<(usize, &Example)> = batch.iter().map(|&(d, i)| (d, &data[d][i])).collect();
            let mut weights = cfg.weights;
            weights.adv *= cfg.warmup.factor(step, total_steps);
            let mut g = Graph::new().train_mode(rng.take().expect("dropout stream"));
            let parts = total_loss(&mut g, &model, &items, &weights)?;
            model.store.zero_grad();
            g.backward(parts.total, &mut model.store)?;
            opt.step(&mut model.store);
            rng = g.take_rng();
            loss_sum += g.value(parts.total).item();
            step += 1;
        }
        let f1 = evaluate_domain(&model, 0, &source.dev, &cfg.eval)?.f1;
        log.epochs.push(EpochLog { epoch, mean_loss: loss_sum / steps_per_epoch as f64, dev_f1: Some(f1) });
        if stopper.observe(f1, epoch, || model.store.snapshot()) {
            break;
        }
    }
    if let Some((f1, epoch, params)) = stopper.into_best() {
        model.store.restore(&params);
        log.best_epoch = epoch;
        log.best_dev_f1 = Some(f1);
    }
    Ok((model, log))
}
