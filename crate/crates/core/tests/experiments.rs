//! Experiment runners on tiny synthetic data.

use std::fs;

use spanparse::adapt::{DaMode, SharedPrivateModel};
use spanparse::chart::ScorerConfig;
use spanparse::encoder::EncoderConfig;
use spanparse::experiments::{
    builtin_suite, da_domains, fold_language, run_combined, run_crossval, run_experiment, run_finetune, run_zero_shot, synth_generate,
    write_reports, ExperimentConfig, ExperimentData, Mode, ResamplePlan,
};
use spanparse::metrics::aggregate;
use spanparse::multilingual::{evaluate_trees, train_joint, LanguageSpec, ModelConfig};
use spanparse::treebank::{serialize_corpus, Tree};

fn tiny_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig { runs: 2, repeats: 2, sizes: vec![0, 5], finetune_epochs: 2, seed: 11, ..ExperimentConfig::default() };
    cfg.model = ModelConfig {
        encoder: EncoderConfig { vocab_size: 0, dim: 16, num_layers: 1, num_heads: 2, ff_dim: 24, max_positions: 64, dropout_rate: 0.1 },
        scorer: ScorerConfig { hidden: 16 },
        ..ModelConfig::default()
    };
    cfg.train.max_epochs = 2;
    cfg.train.mixing.batch_size = 8;
    cfg
}

fn corpus(n: usize, domain: Option<&str>, seed: u64) -> Vec<Tree> {
    synth_generate(&builtin_suite(), n, domain, seed, 12).unwrap()
}

#[test]
fn crossval_is_reproducible() {
    let cfg = tiny_config();
    let main = corpus(40, None, 1);
    let a = run_crossval(&cfg, &main, &[]).unwrap();
    let b = run_crossval(&cfg, &main, &[]).unwrap();
    assert_eq!(a.len(), 2);
    assert_eq!(a, b);
    let single = run_crossval(&ExperimentConfig { runs: 1, ..cfg }, &main, &[]).unwrap();
    assert_eq!(aggregate(&single).unwrap().f1.std, 0.0);
}

#[test]
fn finetune_with_no_examples_is_zero_shot() {
    let cfg = tiny_config();
    let (main, _) = fold_language("main", &corpus(40, None, 1), &cfg, 0).unwrap();
    let (model, _) = train_joint(&main, &[], &cfg.model_config(1), &cfg.train_config(1)).unwrap();
    let targets = vec![("north".to_string(), corpus(20, Some("north"), 2)), ("south".to_string(), corpus(20, Some("south"), 3))];
    let zero = run_zero_shot(&model, "main", &targets, cfg.eval()).unwrap();
    let tuned = run_finetune(&model, "main", &targets, &ResamplePlan { train_size: 0, repeats: 2, seed: 0 }, 50, &cfg.train).unwrap();
    for (name, _) in &targets {
        assert!(tuned[name].iter().all(|r| r == &zero[name]));
    }
    let k5 = run_finetune(&model, "main", &targets, &ResamplePlan { train_size: 5, repeats: 2, seed: 0 }, 2, &cfg.train).unwrap();
    assert_eq!(k5["north"].len(), 2);
    assert_eq!(k5["north"][0].n_sentences, 15);
    assert!(run_finetune(&model, "main", &targets, &ResamplePlan { train_size: 20, repeats: 1, seed: 0 }, 2, &cfg.train).is_err());
}

#[test]
fn combined_without_target_data_is_plain_training() {
    let cfg = tiny_config();
    let (source, _) = fold_language("main", &corpus(40, None, 1), &cfg, 0).unwrap();
    let targets = vec![("north".to_string(), corpus(20, Some("north"), 2))];
    let plan = ResamplePlan { train_size: 0, repeats: 1, seed: 0 };
    let combined = run_combined(&cfg, &source, &[], &targets, &plan, Mode::Combined).unwrap();
    let seed = spanparse::derive_seed(cfg.seed, 1000);
    let (model, _) = train_joint(&source, &[], &cfg.model_config(seed), &cfg.train_config(seed)).unwrap();
    assert_eq!(combined["north"][0], evaluate_trees(&model, 0, &targets[0].1, cfg.eval()).unwrap());
}

#[test]
fn da_modes_get_one_private_encoder_per_domain() {
    let cfg = tiny_config();
    let (source, _) = fold_language("main", &corpus(40, None, 1), &cfg, 0).unwrap();
    let targets = vec![("north".to_string(), corpus(20, Some("north"), 2)), ("south".to_string(), corpus(20, Some("south"), 3))];
    let samples = vec![vec![0, 1, 2], vec![4, 5]];
    let domains = da_domains(&source, &targets, &samples);
    let refs: Vec<&LanguageSpec> = domains.iter().collect();
    for mode in [DaMode::DaFs, DaMode::DaMsdm] {
        let m = SharedPrivateModel::new(cfg.model_config(0), mode, &refs).unwrap();
        assert_eq!(m.private.len(), 1 + targets.len());
    }
    let plan = ResamplePlan { train_size: 4, repeats: 1, seed: 0 };
    let out = run_combined(&cfg, &source, &[], &targets, &plan, Mode::DaMsdm).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(out["south"][0].n_sentences, 16);
}

#[test]
fn experiment_reports_are_bitwise_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("main.mrg"), serialize_corpus(&corpus(40, None, 1))).unwrap();
    fs::write(dir.path().join("north.mrg"), serialize_corpus(&corpus(20, Some("north"), 2))).unwrap();
    let text = "experiment.name = t\nexperiment.phase = 3\nexperiment.mode = fine-tune\nexperiment.seed = 4\n\
                data.main = main.mrg\ndata.target.north = north.mrg\nencoder.dim = 16\nencoder.layers = 1\n\
                encoder.heads = 2\nencoder.ff_dim = 16\nscorer.hidden = 16\ntrain.max_epochs = 1\n\
                train.finetune_epochs = 1\nresample.sizes = 5\nresample.repeats = 2\n";
    let cfg = ExperimentConfig::parse(text, dir.path()).unwrap();
    let data = ExperimentData::load(&cfg).unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let reports = run_experiment(&cfg, &data).unwrap();
        assert_eq!(reports.keys().cloned().collect::<Vec<_>>(), ["main", "north.k5", "north.zero-shot"]);
        let out = dir.path().join(run);
        write_reports(&out, &cfg.name, &reports).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0].len(), 4);
}
