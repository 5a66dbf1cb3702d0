use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use spanparse::experiments::{
    builtin_suite, read_report_summary, run_experiment, source_model, synth_generate, write_reports, ExperimentConfig, ExperimentData,
    ExperimentError, Pcfg,
};
use spanparse::metrics::{evalb_score, EvalConfig};
use spanparse::multilingual::{evaluate_trees, MultilingualParser};
use spanparse::treebank::{
    filter_corpus, parse_bracketed, serialize, serialize_corpus, strip_empty_and_indices, PreprocessConfig, Token, Tree,
};

#[derive(Debug, Error)]
enum CliError {
    #[error("missing file: {path}: {source}")]
    MissingFile { path: PathBuf, source: std::io::Error },
    #[error("write failed: {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Config(String),
    #[error("malformed input: {0}")]
    Input(String),
    #[error("run failed: {0}")]
    Run(String),
}

type Result<T> = std::result::Result<T, CliError>;

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Io { path, source } => CliError::MissingFile { path, source },
            ExperimentError::Config { .. } => CliError::Config(e.to_string()),
            ExperimentError::Treebank(_) | ExperimentError::Grammar { .. } => CliError::Input(e.to_string()),
            other => CliError::Run(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "spanparse", version, about = "Span-based constituency parsing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Strip empty categories and coindices, drop long sentences.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 100)]
        max_length: usize,
    },
    /// Sample a synthetic treebank from a grammar file or the built-in suite.
    Synth {
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(long)]
        domain: Option<String>,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        max_length: usize,
        #[arg(long)]
        output: PathBuf,
        /// Also write the grammar in text form.
        #[arg(long)]
        dump_grammar: Option<PathBuf>,
    },
    /// Train the main-language model of a phase 1 or 2 config and save it.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run a phase 3 config (zero-shot, fine-tune, combined, da-fs, da-msdm).
    Finetune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Parse whitespace-tokenized sentences, one per line.
    Parse {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        language: Option<String>,
    },
    /// Score predicted trees against gold trees.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Comma-separated punctuation tags.
        #[arg(long)]
        punct: Option<String>,
        #[arg(long)]
        strip_function_tags: bool,
    },
    /// k-fold cross-validation of a phase 1 or 2 config.
    Crossval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Summarize `.report` files in a directory.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::MissingFile { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

fn read_trees(path: &Path) -> Result<Vec<Tree>> {
    parse_bracketed(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path, phases: &[u8]) -> Result<ExperimentConfig> {
    read(path)?;
    let cfg = ExperimentConfig::load(path)?;
    if !phases.contains(&cfg.phase) {
        return Err(CliError::Config(format!("phase {} is not valid for this command", cfg.phase)));
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess { input, output, max_length } => {
            if max_length == 0 {
                return Err(CliError::Config("--max-length must be at least 1".into()));
            }
            let cfg = PreprocessConfig::default().with_max_length(max_length);
            let trees = read_trees(&input)?;
            let before = trees.len();
            let cleaned: Vec<Tree> = trees.iter().filter_map(|t| strip_empty_and_indices(t, &cfg)).collect();
            let emptied = before - cleaned.len();
            let (kept, long) = filter_corpus(cleaned, &cfg);
            write(&output, &serialize_corpus(&kept))?;
            println!("kept={} empty={emptied} too_long={long}", kept.len());
        }
        Command::Synth { grammar, domain, n, seed, max_length, output, dump_grammar } => {
            let g = match grammar {
                Some(p) => Pcfg::parse(&read(&p)?)?,
                None => builtin_suite(),
            };
            let trees = synth_generate(&g, n, domain.as_deref(), seed, max_length)?;
            write(&output, &serialize_corpus(&trees))?;
            if let Some(p) = dump_grammar {
                write(&p, &g.to_text())?;
            }
            println!("sentences={}", trees.len());
        }
        Command::Train { config, output } => {
            let mut cfg = load_config(&config, &[1, 2])?;
            cfg.checkpoint = Some(output.clone());
            if output.exists() {
                return Err(CliError::Run(format!("{} already exists", output.display())));
            }
            let data = ExperimentData::load(&cfg)?;
            let (model, log) = source_model(&cfg, &data)?;
            let main = data.main_language(&cfg)?;
            let report = evaluate_trees(&model, 0, &main.test, cfg.eval()).map_err(|e| CliError::Run(e.to_string()))?;
            if let Some(log) = log {
                println!("best_epoch={}", log.best_epoch);
            }
            print!("{}", report.to_key_value());
        }
        Command::Finetune { config, output } => experiment(&config, output, &[3])?,
        Command::Crossval { config, output } => experiment(&config, output, &[1, 2])?,
        Command::Parse { model, input, output, language } => {
            if !model.exists() {
                let source = std::io::Error::from(std::io::ErrorKind::NotFound);
                return Err(CliError::MissingFile { path: model, source });
            }
            let m = MultilingualParser::load(&model).map_err(|e| CliError::Input(format!("{}: {e}", model.display())))?;
            let lang = match language {
                Some(l) => m.language_index(&l).map_err(|e| CliError::Config(e.to_string()))?,
                None => 0,
            };
            let mut out = String::new();
            for line in read(&input)?.lines() {
                let tokens: Vec<Token> = line
                    .split_whitespace()
                    .enumerate()
                    .map(|(index, form)| Token { form: form.to_string(), pos: "X".into(), index })
                    .collect();
                if tokens.is_empty() {
                    continue;
                }
                let tree = m.parse_tokens(lang, &tokens).map_err(|e| CliError::Run(e.to_string()))?;
                out.push_str(&serialize(&tree));
                out.push('\n');
            }
            write(&output, &out)?;
        }
        Command::Evaluate { gold, pred, punct, strip_function_tags } => {
            let golds = read_trees(&gold)?;
            let preds = read_trees(&pred)?;
            let mut cfg = match punct {
                Some(p) => EvalConfig::with_punct(p.split(',').map(str::trim).filter(|s| !s.is_empty())),
                None => EvalConfig::default(),
            };
            cfg.function_tags_atomic = !strip_function_tags;
            let report = evalb_score(&golds, &preds, &cfg).map_err(|e| CliError::Input(e.to_string()))?;
            print!("{}", report.to_key_value());
        }
        Command::Report { input, output } => {
            let dir = fs::read_dir(&input).map_err(|source| CliError::MissingFile { path: input.clone(), source })?;
            let mut paths: Vec<PathBuf> =
                dir.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "report")).collect();
            paths.sort();
            let mut table = String::new();
            for p in paths {
                let (f1, n) = read_report_summary(&read(&p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
                let name = p.file_stem().unwrap_or_default().to_string_lossy();
                table.push_str(&format!("{name:<40}{f1:<20}{n}\n"));
            }
            match output {
                Some(p) => write(&p, &table)?,
                None => print!("{table}"),
            }
        }
    }
    Ok(())
}

fn experiment(config: &Path, output: Option<PathBuf>, phases: &[u8]) -> Result<()> {
    let cfg = load_config(config, phases)?;
    let data = ExperimentData::load(&cfg)?;
    let reports = run_experiment(&cfg, &data)?;
    let dir = output.unwrap_or_else(|| cfg.output.clone());
    write_reports(&dir, &cfg.name, &reports)?;
    print!("{}", read(&dir.join(format!("{}.summary.txt", cfg.name)))?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spanparse: {e}");
            ExitCode::FAILURE
        }
    }
}
