//! `actorloc`: actor proposals, Viterbi baseline, attention training,
//! ranking, evaluation and synthetic suites from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::Method;
use config::{RunConfig, SplitChoice, SuiteKind};

const EXIT_VALIDATION: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

/// Bad input documents, flags or configuration.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn is_validation(e: &anyhow::Error) -> bool {
    e.downcast_ref::<Invalid>().is_some()
        || e.downcast_ref::<actorloc::Error>()
            .is_some_and(actorloc::Error::is_validation)
}

/// Per-video failures collected while the run continues.
#[derive(Debug, Default)]
pub struct Failures {
    count: usize,
    validation: bool,
}

impl Failures {
    pub fn add(&mut self, e: &anyhow::Error) {
        self.count += 1;
        self.validation |= is_validation(e);
    }
}

#[derive(Parser)]
#[command(
    name = "actorloc",
    version,
    about = "Actor proposals and weakly-supervised action localization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for per-video work.
    #[arg(long)]
    jobs: Option<usize>,
    /// Manifest split to process.
    #[arg(long, value_enum)]
    split: Option<SplitChoice>,
}

#[derive(Subcommand)]
enum Command {
    /// Actor proposals by greedy seed selection and tracking.
    Link {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_proposals: Option<usize>,
        #[arg(long)]
        filter_threshold: Option<f64>,
    },
    /// Baseline proposals by dynamic-programming box linking.
    Viterbi {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_proposals: Option<usize>,
    },
    /// Train the proposal classifier from video labels.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        proposals: Option<PathBuf>,
        #[arg(long)]
        topk: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score and rank each video's proposals per class.
    Rank {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        proposals: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Recall of proposals against ground truth.
    EvalRecall {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        proposals: Option<PathBuf>,
        #[arg(long)]
        iou: Vec<f64>,
        #[arg(long)]
        budget: Vec<usize>,
    },
    /// Per-class AP and mAP of ranked proposals.
    EvalMap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        proposals: Option<PathBuf>,
        #[arg(long, conflicts_with = "checkpoint")]
        rankings: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        iou: Vec<f64>,
    },
    /// Generate a synthetic suite with a manifest.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: Option<SuiteKind>,
        #[arg(long)]
        videos: Option<usize>,
    },
}

fn apply_common(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    let inputs = &mut cfg.inputs;
    inputs.manifest = common.manifest.clone().or(inputs.manifest.take());
    inputs.out = common.out.clone().or(inputs.out.take());
    inputs.split = common.split.or(inputs.split);
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(j) = common.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *slot = value;
    }
}

fn resolve(command: Command) -> Result<(&'static str, RunConfig, Command)> {
    let (name, mut cfg) = match &command {
        Command::Link {
            common,
            max_proposals,
            filter_threshold,
        } => {
            let mut cfg = apply_common(common)?;
            set(&mut cfg.linking.max_proposals, *max_proposals);
            set(&mut cfg.linking.filter_threshold, *filter_threshold);
            ("link", cfg)
        }
        Command::Viterbi { common, max_proposals } => {
            let mut cfg = apply_common(common)?;
            set(&mut cfg.viterbi.num_tubes, *max_proposals);
            ("viterbi", cfg)
        }
        Command::Train {
            common,
            proposals,
            topk,
            epochs,
        } => {
            let mut cfg = apply_common(common)?;
            set_path(&mut cfg.inputs.proposals, proposals.clone());
            set(&mut cfg.attention.top_k, *topk);
            set(&mut cfg.train.epochs, *epochs);
            ("train", cfg)
        }
        Command::Rank {
            common,
            proposals,
            checkpoint,
        } => {
            let mut cfg = apply_common(common)?;
            set_path(&mut cfg.inputs.proposals, proposals.clone());
            set_path(&mut cfg.inputs.checkpoint, checkpoint.clone());
            ("rank", cfg)
        }
        Command::EvalRecall {
            common,
            proposals,
            iou,
            budget,
        } => {
            let mut cfg = apply_common(common)?;
            set_path(&mut cfg.inputs.proposals, proposals.clone());
            if !iou.is_empty() {
                cfg.eval.recall_iou = iou.clone();
            }
            if !budget.is_empty() {
                cfg.eval.budgets = budget.clone();
            }
            ("eval-recall", cfg)
        }
        Command::EvalMap {
            common,
            proposals,
            rankings,
            checkpoint,
            iou,
        } => {
            let mut cfg = apply_common(common)?;
            set_path(&mut cfg.inputs.proposals, proposals.clone());
            set_path(&mut cfg.inputs.rankings, rankings.clone());
            set_path(&mut cfg.inputs.checkpoint, checkpoint.clone());
            if !iou.is_empty() {
                cfg.eval.map_iou = iou.clone();
            }
            ("eval-map", cfg)
        }
        Command::Synth { common, kind, videos } => {
            let mut cfg = apply_common(common)?;
            set(&mut cfg.synth.kind, *kind);
            set(&mut cfg.synth.videos, *videos);
            ("synth", cfg)
        }
    };
    cfg.synth.classification.seed = cfg.seed;
    cfg.validate()?;
    Ok((name, cfg, command))
}

fn run(command: Command) -> Result<Failures> {
    let (name, cfg, command) = resolve(command)?;
    cfg.write_snapshot(name)?;
    match command {
        Command::Link { .. } => commands::link(&cfg, Method::ActorLinking),
        Command::Viterbi { .. } => commands::link(&cfg, Method::Viterbi),
        Command::Train { .. } => commands::train_cmd(&cfg),
        Command::Rank { .. } => commands::rank(&cfg),
        Command::EvalRecall { .. } => commands::eval_recall(&cfg),
        Command::EvalMap { .. } => commands::eval_map(&cfg),
        Command::Synth { .. } => commands::synth(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(f) if f.count == 0 => ExitCode::SUCCESS,
        Ok(f) => {
            eprintln!("error: {} video(s) failed", f.count);
            ExitCode::from(if f.validation { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_validation(&e) {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            })
        }
    }
}
