//! The `kgctx` command line.
//!
//! Every invocation ends by printing one JSON object on stdout (the summary
//! line) and exits with 0 on success, 1 on a usage error, 2 on a data error
//! or 3 when a numeric check or training run aborts.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod failure;
pub mod scaling;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use kgctx::aggregator::Variant;
use kgctx::diagnostics::GradTarget;
use kgctx::tripler::SpaceMode;
use serde_json::{json, Map, Value};

use config::RunConfig;
use failure::{CmdResult, ExitKind, Failure};

#[derive(Debug, Parser)]
#[command(name = "kgctx", version, about = "Knowledge-graph context for sentential relation extraction")]
pub struct Cli {
    /// TOML run configuration. Without it every default applies.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long = "out", global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build vocabularies, id indexes and the neighborhood cache.
    Prepare,
    /// Train the graph-attention triple model.
    TrainTripler,
    /// Train the sentence-level extraction model.
    TrainRecon {
        /// plain, eac, eac+kggat-same or eac+kggat-separate.
        #[arg(long)]
        variant: Option<Variant>,
        /// Triple checkpoint for the kggat variants.
        #[arg(long)]
        tripler: Option<PathBuf>,
    },
    /// Score a predictions file, or predict with a checkpoint and score.
    Eval {
        #[arg(long, conflicts_with_all = ["checkpoint", "sentences", "tripler"])]
        predictions: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Sentences to label; defaults to data.test_sentences.
        #[arg(long)]
        sentences: Option<PathBuf>,
        #[arg(long)]
        tripler: Option<PathBuf>,
    },
    /// Relation ranking metrics of a triple checkpoint.
    EvalTriples {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Triples to rank; defaults to the prepared graph.
        #[arg(long)]
        triples: Option<PathBuf>,
        /// Do not filter other true relations of a pair.
        #[arg(long)]
        raw: bool,
    },
    /// Paired significance test between two prediction files.
    Mcnemar {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// One gold label per line; defaults to the gold field of the files.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long, default_value = "A vs B")]
        name: String,
    },
    /// Precision-recall curve CSV of a predictions file.
    PrCurve {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit one of the expressiveness counterexamples.
    Probe {
        #[arg(long)]
        lemma: u8,
        #[arg(long, default_value = "same")]
        mode: SpaceMode,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Finite-difference gradient check of a built-in fixture.
    Gradcheck { target: GradTarget },
    /// Epoch time of triple training on growing graph fractions.
    BenchScaling {
        #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 1.0])]
        fractions: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        entities: usize,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Prepare => "prepare",
            Command::TrainTripler => "train-tripler",
            Command::TrainRecon { .. } => "train-recon",
            Command::Eval { .. } => "eval",
            Command::EvalTriples { .. } => "eval-triples",
            Command::Mcnemar { .. } => "mcnemar",
            Command::PrCurve { .. } => "pr-curve",
            Command::Probe { .. } => "probe",
            Command::Gradcheck { .. } => "gradcheck",
            Command::BenchScaling { .. } => "bench-scaling",
        }
    }
}

/// Exit status and summary line of one invocation.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: u8,
    pub summary: Value,
}

fn load_config(cli: &Cli) -> CmdResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.output_dir {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: Cli) -> CmdResult<Map<String, Value>> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Prepare => commands::prepare(&cfg),
        Command::TrainTripler => commands::train_tripler(&cfg),
        Command::TrainRecon { variant, tripler } => commands::train_recon(&cfg, variant, tripler),
        Command::Eval {
            predictions,
            checkpoint,
            sentences,
            tripler,
        } => commands::eval(&cfg, predictions, checkpoint, sentences, tripler),
        Command::EvalTriples { checkpoint, triples, raw } => commands::eval_triples(&cfg, checkpoint, triples, raw),
        Command::Mcnemar { a, b, gold, name } => commands::mcnemar_cmd(&a, &b, gold.as_deref(), &name),
        Command::PrCurve { predictions, output } => commands::pr_curve_cmd(&cfg, &predictions, output),
        Command::Probe { lemma, mode, steps } => commands::probe(&cfg, lemma, mode, steps),
        Command::Gradcheck { target } => commands::gradcheck_cmd(target),
        Command::BenchScaling {
            fractions,
            entities,
            repetitions,
            output,
        } => commands::bench_scaling(&cfg, &fractions, entities, repetitions, output),
    }
}

fn error_summary(command: &str, f: &Failure) -> Value {
    json!({
        "command": command,
        "status": "error",
        "exit_code": f.kind.code(),
        "error": f.to_string(),
    })
}

/// Parses `args` (program name first), runs the command and reports.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Outcome {
                    code: 0,
                    summary: json!({ "command": "help", "status": "ok" }),
                };
            }
            eprint!("{e}");
            let f = Failure::usage(e.kind());
            return Outcome {
                code: ExitKind::Usage.code(),
                summary: error_summary("", &f),
            };
        }
    };
    let name = cli.command.name();
    match execute(cli) {
        Ok(fields) => {
            let mut summary = Map::new();
            summary.insert("command".into(), name.into());
            summary.insert("status".into(), "ok".into());
            summary.extend(fields);
            Outcome {
                code: 0,
                summary: Value::Object(summary),
            }
        }
        Err(f) => {
            eprintln!("error: {f}");
            Outcome {
                code: f.kind.code(),
                summary: error_summary(name, &f),
            }
        }
    }
}
