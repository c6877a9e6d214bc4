use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use killmatrix::encoding::{Representation, DEFAULT_WINDOW};
use killmatrix::eval::DEFAULT_THRESHOLD;
use killmatrix::minilang::DEFAULT_STEP_BUDGET;
use killmatrix::model::ModelKind;
use killmatrix::pipeline::{
    self, load_projects, NoDiffMode, PipelineError, ProjectConfig, SplitMode, SplitName, SplitSpec, Workdir, CHECKPOINT_FILE,
    DEFAULT_FLOPS_PER_STEP, DEFAULT_VOCAB_SIZE,
};

/// Mutate MiniLang projects, execute their kill matrices, and train and
/// evaluate classifiers that predict test outcomes.
#[derive(Parser, Debug)]
#[command(name = "killmatrix", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Seed for splitting, initialization and training order [default: 0,
    /// or the config file's seed].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads [default: all cores].
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Interpreter step budget per test run.
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// Directory for every artifact.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate mutants -> mutants.jsonl
    Mutate {
        /// `.mini` files or directories of them.
        #[arg(required = true)]
        sources: Vec<PathBuf>,
    },
    /// Execute covering tests on every mutant -> coverage.json, matrix.jsonl
    Matrix {
        #[arg(required = true)]
        sources: Vec<PathBuf>,
    },
    /// Encode covering pairs -> dataset.jsonl, vocab.json
    Encode {
        #[arg(required = true)]
        sources: Vec<PathBuf>,
        /// token-diff, line-diff or no-diff.
        #[arg(long = "repr", default_value = "token-diff")]
        representation: Representation,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long, default_value_t = DEFAULT_VOCAB_SIZE)]
        vocab_size: usize,
    },
    /// Split dataset.jsonl -> train.jsonl, val.jsonl, test.jsonl
    Split {
        /// same-project or cross-project.
        #[arg(long, default_value = "same-project")]
        mode: SplitMode,
        /// Train, validation and test shares.
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
        ratios: Vec<f64>,
        /// Cross-project placement, `project=train|val|test`; repeatable.
        #[arg(long = "assign", value_parser = parse_assignment)]
        assign: Vec<(String, SplitName)>,
    },
    /// Train a classifier -> model.ckpt, training_log.json
    Train {
        /// transformer or baseline; overrides the config file.
        #[arg(long)]
        model: Option<ModelKind>,
        /// TOML with `[classifier]` and `[train]` tables.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score the test split -> predictions.jsonl
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// direct or subtract; no-diff data only.
        #[arg(long, default_value = "direct")]
        no_diff_mode: NoDiffMode,
    },
    /// Score predictions against the kill matrix -> report.json, report.md
    Evaluate {
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Also evaluate the standard threshold grid -> sweep.csv
        #[arg(long)]
        sweep: bool,
    },
    /// Extend report.json with extra sections.
    Report {
        /// Add the checking-time model.
        #[arg(long, required = true)]
        time_model: bool,
        /// Model multiply-adds that cost as much as one interpreter step.
        #[arg(long, default_value_t = DEFAULT_FLOPS_PER_STEP)]
        flops_per_step: u64,
    },
    /// Run every step from a project config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_assignment(s: &str) -> Result<(String, SplitName), String> {
    let (project, split) = s.split_once('=').ok_or_else(|| format!("expected project=split, got `{s}`"))?;
    Ok((project.to_string(), split.parse()?))
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let g = &cli.global;
    let work = Workdir::new(&g.workdir);
    std::fs::create_dir_all(&g.workdir).map_err(|e| PipelineError::Data(format!("{}: {e}", g.workdir.display())))?;
    let budget = g.budget.unwrap_or(DEFAULT_STEP_BUDGET);
    let seed = g.seed.unwrap_or(0);
    match cli.command {
        Command::Mutate { sources } => {
            let ms = pipeline::mutate(&work, &load_projects(&sources)?)?;
            println!("{} mutants", ms.len());
        }
        Command::Matrix { sources } => {
            let km = pipeline::matrix(&work, &load_projects(&sources)?, budget)?;
            let detected = km.iter().filter(|(_, _, e)| e.detected).count();
            println!("{} covering pairs, {detected} detecting", km.len());
        }
        Command::Encode { sources, representation, window, vocab_size } => {
            let (vocab, examples) = pipeline::encode(&work, &load_projects(&sources)?, representation, window, vocab_size)?;
            let truncated = examples.iter().filter(|e| e.truncated).count();
            println!("{} examples ({truncated} truncated), vocabulary of {}", examples.len(), vocab.len());
        }
        Command::Split { mode, ratios, assign } => {
            let spec = SplitSpec { mode, ratios: [ratios[0], ratios[1], ratios[2]], assignment: assign.into_iter().collect() };
            let a = pipeline::split_dataset(&work, &spec, seed)?;
            println!("mutants: {} train, {} val, {} test", a.train.len(), a.val.len(), a.test.len());
        }
        Command::Train { model, config } => {
            let mut cfg = match config {
                Some(p) => ProjectConfig::load(&p)?,
                None => ProjectConfig::default(),
            };
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            if let Some(m) = model {
                cfg.classifier.model_kind = m;
            }
            let (_, log) = pipeline::train(&work, &cfg.classifier_config(), &cfg.train_config())?;
            println!("best epoch {} of {}, validation F1 {:.4}", log.best_epoch, log.epochs.len(), log.best_val_f1);
        }
        Command::Predict { checkpoint, no_diff_mode } => {
            let ckpt = checkpoint.unwrap_or_else(|| work.path(CHECKPOINT_FILE));
            let pred = pipeline::predict(&work, &ckpt, no_diff_mode)?;
            println!("{} pairs scored", pred.len());
        }
        Command::Evaluate { threshold, sweep } => {
            let r = pipeline::evaluate(&work, threshold, sweep)?;
            println!(
                "matrix F1 {:.4}; suite P {:.4} R {:.4} F1 {:.4}; mutation score error {:.4}",
                r.matrix.f1, r.suite.precision, r.suite.recall, r.suite.f1, r.score_error
            );
        }
        Command::Report { time_model: _, flops_per_step } => {
            let r = pipeline::report_time_model(&work, flops_per_step)?;
            let t = r.time_model.expect("just added");
            println!(
                "checking cost {} steps vs {} for full execution ({:.1}% saved)",
                t.checking_cost,
                t.full_execution_cost,
                100.0 * t.checking_savings
            );
        }
        Command::Run { config } => {
            let mut cfg = ProjectConfig::load(&config)?;
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            if let Some(b) = g.budget {
                cfg.budget = b;
            }
            let r = pipeline::run(&work, &cfg)?;
            println!("matrix F1 {:.4}; suite F1 {:.4}", r.matrix.f1, r.suite.f1);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.global.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
