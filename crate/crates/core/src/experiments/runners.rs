use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{make_folds, resample, ExperimentConfig, ExperimentError, Mode, ResamplePlan, Result, Split};
use crate::adapt::{evaluate_domain, train_shared_private};
use crate::metrics::{aggregate, format_mean_std, EvalConfig, MetricReport};
use crate::multilingual::{evaluate_trees, fine_tune, train_joint, LanguageSpec, MultilingualParser, TrainConfig, TrainLog};
use crate::treebank::{parse_bracketed, Tree};

/// Report lists keyed by what they measure, e.g. `north.k100`.
pub type ReportSet = BTreeMap<String, Vec<MetricReport>>;

pub fn read_treebank(path: &Path, max_length: Option<usize>) -> Result<Vec<Tree>> {
    let text = fs::read_to_string(path).map_err(|e| ExperimentError::Io { path: path.to_path_buf(), source: e })?;
    let mut trees = parse_bracketed(&text)?;
    if let Some(m) = max_length {
        trees.retain(|t| t.len() <= m);
    }
    Ok(trees)
}

fn pick(trees: &[Tree], idx: &[usize]) -> Vec<Tree> {
    idx.iter().map(|&i| trees[i].clone()).collect()
}

/// Train, dev and test sets for run `r` of the fold plan.
pub fn fold_language(name: &str, corpus: &[Tree], cfg: &ExperimentConfig, r: usize) -> Result<(LanguageSpec, Split)> {
    let folds = make_folds(corpus.len(), &cfg.folds)?;
    let split = folds.run(r);
    let lang = LanguageSpec::new(name, pick(corpus, &split.train), pick(corpus, &split.dev), pick(corpus, &split.test));
    Ok((lang, split))
}

/// Trains one model per fold run (main plus `aux` languages, early
/// stopping on the fold's dev set) and scores it on the fold's test set.
pub fn run_crossval(cfg: &ExperimentConfig, main: &[Tree], aux: &[LanguageSpec]) -> Result<Vec<MetricReport>> {
    let mut reports = Vec::with_capacity(cfg.runs);
    for r in 0..cfg.runs {
        let (lang, _) = fold_language("main", main, cfg, r)?;
        let seed = crate::derive_seed(cfg.seed, 10 + r as u64);
        let (model, _) = train_joint(&lang, aux, &cfg.model_config(seed), &cfg.train_config(seed))?;
        reports.push(evaluate_trees(&model, 0, &lang.test, cfg.eval())?);
    }
    Ok(reports)
}

/// Scores `lang`'s head on each target without touching the model.
pub fn run_zero_shot(
    model: &MultilingualParser,
    lang: &str,
    targets: &[(String, Vec<Tree>)],
    eval: &EvalConfig,
) -> Result<BTreeMap<String, MetricReport>> {
    let idx = model.language_index(lang)?;
    targets.iter().map(|(name, trees)| Ok((name.clone(), evaluate_trees(model, idx, trees, eval)?))).collect()
}

type TrainTest = (Vec<usize>, Vec<usize>);

/// Per target, its `(train, test)` index sets for every repeat.
fn target_splits(targets: &[(String, Vec<Tree>)], plan: &ResamplePlan) -> Result<Vec<Vec<TrainTest>>> {
    targets
        .iter()
        .enumerate()
        .map(|(t, (_, trees))| resample(trees.len(), &ResamplePlan { seed: crate::derive_seed(plan.seed, t as u64), ..*plan }))
        .collect()
}

/// For every repeat, fine-tunes a copy of `model` on `k` sentences of every
/// target together for a fixed number of epochs and scores each target on
/// its held-out remainder. `k = 0` is zero-shot evaluation on every target
/// sentence.
pub fn run_finetune(
    model: &MultilingualParser,
    lang: &str,
    targets: &[(String, Vec<Tree>)],
    plan: &ResamplePlan,
    epochs: usize,
    cfg: &TrainConfig,
) -> Result<ReportSet> {
    model.language_index(lang)?;
    let splits = target_splits(targets, plan)?;
    let mut out = ReportSet::new();
    for r in 0..plan.repeats {
        let mut train = Vec::new();
        for (t, (_, trees)) in targets.iter().enumerate() {
            train.extend(pick(trees, &splits[t][r].0));
        }
        let mut tuned = model.clone();
        let tc = TrainConfig { seed: crate::derive_seed(cfg.seed, r as u64), ..cfg.clone() };
        fine_tune(&mut tuned, lang, &train, epochs, &tc)?;
        let idx = tuned.language_index(lang)?;
        for (t, (name, trees)) in targets.iter().enumerate() {
            let report = evaluate_trees(&tuned, idx, &pick(trees, &splits[t][r].1), &cfg.eval)?;
            out.entry(name.clone()).or_default().push(report);
        }
    }
    Ok(out)
}

/// Domains for shared-private training: the source, then each target with
/// its sampled training sentences. Targets with no sample are left out.
pub fn da_domains(source: &LanguageSpec, targets: &[(String, Vec<Tree>)], samples: &[Vec<usize>]) -> Vec<LanguageSpec> {
    let mut domains = vec![source.clone()];
    for ((name, trees), idx) in targets.iter().zip(samples) {
        if !idx.is_empty() {
            domains.push(LanguageSpec::new(name.clone(), pick(trees, idx), Vec::new(), Vec::new()));
        }
    }
    domains
}

/// For every repeat, retrains from scratch on the source plus `k`
/// sentences of every target and scores each target on its remainder.
/// `combined` merges the samples into the source treebank (keeping any
/// auxiliary languages); the DA modes give each domain its own private
/// encoder and round the batch size up to a multiple of the domain count.
pub fn run_combined(
    cfg: &ExperimentConfig,
    source: &LanguageSpec,
    aux: &[LanguageSpec],
    targets: &[(String, Vec<Tree>)],
    plan: &ResamplePlan,
    mode: Mode,
) -> Result<ReportSet> {
    let splits = target_splits(targets, plan)?;
    let mut out = ReportSet::new();
    for r in 0..plan.repeats {
        let seed = crate::derive_seed(cfg.seed, 1000 + r as u64);
        let samples: Vec<Vec<usize>> = splits.iter().map(|s| s[r].0.clone()).collect();
        let tests: Vec<Vec<Tree>> = targets.iter().zip(&splits).map(|((_, trees), s)| pick(trees, &s[r].1)).collect();
        match mode.da_mode() {
            None if mode == Mode::Combined => {
                let mut main = source.clone();
                for ((_, trees), idx) in targets.iter().zip(&samples) {
                    main.train.extend(pick(trees, idx));
                }
                let (model, _) = train_joint(&main, aux, &cfg.model_config(seed), &cfg.train_config(seed))?;
                for ((name, _), test) in targets.iter().zip(&tests) {
                    out.entry(name.clone()).or_default().push(evaluate_trees(&model, 0, test, cfg.eval())?);
                }
            }
            None => return Err(ExperimentError::Plan(format!("mode `{mode}` does not retrain"))),
            Some(da) => {
                let domains = da_domains(source, targets, &samples);
                let mut da_cfg = cfg.da_config(da, seed);
                da_cfg.batch_size = da_cfg.batch_size.div_ceil(domains.len()).max(1) * domains.len();
                let (model, _) = train_shared_private(&domains, &cfg.model_config(seed), &da_cfg)?;
                for ((name, _), test) in targets.iter().zip(&tests) {
                    let d = model.domain_index(name).unwrap_or(0);
                    out.entry(name.clone()).or_default().push(evaluate_domain(&model, d, test, cfg.eval())?);
                }
            }
        }
    }
    Ok(out)
}

/// Loaded treebanks of a config.
#[derive(Debug, Clone, Default)]
pub struct ExperimentData {
    pub main: Vec<Tree>,
    pub dev: Option<Vec<Tree>>,
    pub test: Option<Vec<Tree>>,
    pub aux: Vec<LanguageSpec>,
    pub targets: Vec<(String, Vec<Tree>)>,
}

impl ExperimentData {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let read = |p: &Path| read_treebank(p, cfg.max_length);
        let main = match &cfg.main {
            Some(p) => read(p)?,
            None => return Err(ExperimentError::Plan("data.main is required".into())),
        };
        let dev = cfg.dev.as_deref().map(read).transpose()?;
        let test = cfg.test.as_deref().map(read).transpose()?;
        let aux = cfg
            .aux
            .iter()
            .map(|(name, p)| Ok(LanguageSpec::new(name.clone(), read(p)?, Vec::new(), Vec::new())))
            .collect::<Result<Vec<_>>>()?;
        let targets = cfg.targets.iter().map(|(name, p)| Ok((name.clone(), read(p)?))).collect::<Result<Vec<_>>>()?;
        Ok(Self { main, dev, test, aux, targets })
    }

    /// The main treebank as train/dev/test: explicit files when given,
    /// otherwise the first fold run.
    pub fn main_language(&self, cfg: &ExperimentConfig) -> Result<LanguageSpec> {
        match (&self.dev, &self.test) {
            (Some(dev), Some(test)) => Ok(LanguageSpec::new("main", self.main.clone(), dev.clone(), test.clone())),
            _ => Ok(fold_language("main", &self.main, cfg, 0)?.0),
        }
    }
}

/// Trains the main-language model of a config (with its auxiliary
/// languages) or loads it from `model.checkpoint` when that file exists.
pub fn source_model(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<(MultilingualParser, Option<TrainLog>)> {
    if let Some(path) = &cfg.checkpoint {
        if path.exists() {
            return Ok((MultilingualParser::load(path)?, None));
        }
    }
    let main = data.main_language(cfg)?;
    let seed = crate::derive_seed(cfg.seed, 3);
    let (model, log) = train_joint(&main, &data.aux, &cfg.model_config(seed), &cfg.train_config(seed))?;
    if let Some(path) = &cfg.checkpoint {
        model.save(path)?;
    }
    Ok((model, Some(log)))
}

/// Runs the protocol a config describes and returns its reports.
pub fn run_experiment(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<ReportSet> {
    let mut out = ReportSet::new();
    let Some(mode) = cfg.mode else {
        out.insert("crossval".into(), run_crossval(cfg, &data.main, &data.aux)?);
        return Ok(out);
    };
    let k_plan = |k: usize| ResamplePlan { train_size: k, repeats: cfg.repeats, seed: crate::derive_seed(cfg.seed, 4) };
    match mode {
        Mode::ZeroShot | Mode::FineTune => {
            let (model, _) = source_model(cfg, data)?;
            let main = data.main_language(cfg)?;
            out.insert("main".into(), vec![evaluate_trees(&model, 0, &main.test, cfg.eval())?]);
            let lang = model.languages[0].clone();
            for (name, report) in run_zero_shot(&model, &lang, &data.targets, cfg.eval())? {
                out.insert(format!("{name}.zero-shot"), vec![report]);
            }
            if mode == Mode::FineTune {
                for &k in &cfg.sizes {
                    let tc = cfg.train_config(crate::derive_seed(cfg.seed, 5));
                    for (name, reports) in run_finetune(&model, &lang, &data.targets, &k_plan(k), cfg.finetune_epochs, &tc)? {
                        out.insert(format!("{name}.k{k}"), reports);
                    }
                }
            }
        }
        Mode::Combined | Mode::DaFs | Mode::DaMsdm => {
            let source = data.main_language(cfg)?;
            for &k in &cfg.sizes {
                for (name, reports) in run_combined(cfg, &source, &data.aux, &data.targets, &k_plan(k), mode)? {
                    out.insert(format!("{name}.k{k}"), reports);
                }
            }
        }
    }
    Ok(out)
}

/// Writes `<name>.<key>.report` (aggregate and per-run scores as
/// `key=value`) for every entry, plus `<name>.summary.txt`.
pub fn write_reports(dir: &Path, name: &str, reports: &ReportSet) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::Io { path: dir.to_path_buf(), source: e })?;
    let mut summary = format!("{:<24}{:<16}{:<16}{:<16}{:<16}runs\n", "key", "f1", "precision", "recall", "pos_accuracy");
    for (key, runs) in reports {
        let agg = aggregate(runs)?;
        let mut text = agg.to_key_value();
        for (r, rep) in runs.iter().enumerate() {
            let _ = writeln!(text, "run{r}.f1={:.2}", rep.f1);
        }
        let path = dir.join(format!("{name}.{key}.report"));
        fs::write(&path, text).map_err(|e| ExperimentError::Io { path: path.clone(), source: e })?;
        let _ = writeln!(
            summary,
            "{key:<24}{:<16}{:<16}{:<16}{:<16}{}",
            agg.f1.to_string(),
            agg.precision.to_string(),
            agg.recall.to_string(),
            agg.pos_accuracy.to_string(),
            agg.n_reports
        );
    }
    let path = dir.join(format!("{name}.summary.txt"));
    fs::write(&path, summary).map_err(|e| ExperimentError::Io { path: path.clone(), source: e })
}

/// `F1 (std)` and run count from a `.report` file.
pub fn read_report_summary(text: &str) -> Result<(String, usize)> {
    let mut f1 = None;
    let mut std = None;
    let mut n = None;
    for line in text.lines() {
        match line.split_once('=') {
            Some(("f1", v)) => f1 = v.trim().parse::<f64>().ok(),
            Some(("f1_std", v)) => std = v.trim().parse::<f64>().ok(),
            Some(("n_reports", v)) => n = v.trim().parse::<usize>().ok(),
            _ => {}
        }
    }
    match (f1, std, n) {
        (Some(f), Some(s), Some(n)) => Ok((format_mean_std(f, s), n)),
        _ => Err(ExperimentError::Plan("report lacks f1, f1_std or n_reports".into())),
    }
}
