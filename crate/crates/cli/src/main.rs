use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use taskdisc::model::Head;
use taskdisc::task_discovery::Mode;
use taskdisc_cli::commands::{self, Baseline};
use taskdisc_cli::workspace::WorldKind;
use taskdisc_cli::{cmd_repro, CliError, RunConfig, Workspace};

#[derive(Parser)]
#[command(name = "taskdisc", version, about = "Out-of-vocabulary VQA via task discovery")]
struct Cli {
    /// Flat JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for model initialization and sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Use artifacts even if their data hash does not match the configuration.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Description,
    Wordnet,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Description => Mode::Description,
            ModeArg::Wordnet => Mode::Wordnet,
            ModeArg::Both => Mode::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadArg {
    TaskConditional,
    Separable,
}

impl From<HeadArg> for Head {
    fn from(h: HeadArg) -> Self {
        match h {
            HeadArg::TaskConditional => Head::TaskConditional,
            HeadArg::Separable => Head::Separable,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Standard,
    AnswerEmbedding,
    Separable,
}

impl From<BaselineArg> for Baseline {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::Standard => Baseline::Standard,
            BaselineArg::AnswerEmbedding => Baseline::AnswerEmbedding,
            BaselineArg::Separable => Baseline::Separable,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build word group and inverted tables from a lexical graph.
    BuildTables {
        /// Graph JSONL; defaults to the configured graph or the world's.
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Generate the synthetic world.
    GenWorld {
        /// Append yes/no questions (written to world_yesno/).
        #[arg(long)]
        yes_no: bool,
    },
    /// Split questions by out-of-vocabulary answers.
    MakeSplits {
        #[arg(long)]
        yes_no: bool,
    },
    /// Pretrain a classifier on discovered tasks.
    Pretrain {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_enum, default_value = "task-conditional")]
        head: HeadArg,
    },
    /// Learn VQA encoders under a frozen pretrained classifier.
    Transfer {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_enum, default_value = "task-conditional")]
        head: HeadArg,
    },
    /// Train a baseline model.
    TrainBaseline {
        #[arg(value_enum)]
        kind: BaselineArg,
    },
    /// Score a checkpoint on a split part.
    Evaluate {
        /// Checkpoint name under models/, or a path stem.
        model: String,
        #[arg(long, default_value = "test_oov")]
        split: String,
    },
    /// Rank questions by task feature similarity to each slot synset.
    Retrieve {
        pretrained: String,
        vqa: String,
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Combine a frozen and a fine-tuned classifier on the yes/no world.
    Combine {
        /// Pretrained checkpoint; defaults to the configured mode and seed.
        #[arg(long)]
        frozen: Option<String>,
        /// Trained dual checkpoint; trained from `frozen` when absent.
        #[arg(long)]
        finetuned: Option<String>,
    },
    /// Run the full pipeline and write report.json.
    Repro,
}

fn world(yes_no: bool) -> WorldKind {
    if yes_no {
        WorldKind::YesNo
    } else {
        WorldKind::Main
    }
}

fn print<T: serde::Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out_dir = o;
    }
    let mode_or = |m: Option<ModeArg>| m.map(Mode::from).unwrap_or(cfg.mode);
    let ws = |cfg: RunConfig| Workspace::new(cfg, cli.force);
    match cli.command {
        Command::BuildTables { graph } => {
            let (groups, inverted) = commands::cmd_build_tables(&ws(cfg)?, graph.as_deref())?;
            print(&serde_json::json!({"word_groups": groups, "inverted_entries": inverted}))
        }
        Command::GenWorld { yes_no } => print(&commands::cmd_gen_world(&ws(cfg)?, world(yes_no))?),
        Command::MakeSplits { yes_no } => {
            let f = commands::cmd_make_splits(&ws(cfg)?, world(yes_no))?;
            print(&serde_json::json!({
                "oov_answers": f.split.oov_answers.len(),
                "train": f.split.train.len(),
                "val": f.split.val.len(),
                "test_oov": f.split.test_oov.len(),
                "test_mixed": f.split.test_mixed.len(),
            }))
        }
        Command::Pretrain { mode, head } => {
            let mode = mode_or(mode);
            print(&commands::cmd_pretrain(&ws(cfg)?, head.into(), mode)?)
        }
        Command::Transfer { mode, head } => {
            let mode = mode_or(mode);
            let unchanged = commands::cmd_transfer(&ws(cfg)?, head.into(), mode)?;
            print(&serde_json::json!({"theta_unchanged": unchanged}))
        }
        Command::TrainBaseline { kind } => {
            print(&serde_json::json!({"model": commands::cmd_train_baseline(&ws(cfg)?, kind.into())?}))
        }
        Command::Evaluate { model, split } => print(&commands::cmd_evaluate(&ws(cfg)?, &model, &split)?.aggregates),
        Command::Retrieve { pretrained, vqa, split } => {
            print(&commands::cmd_retrieve(&ws(cfg)?, &pretrained, &vqa, &split)?.purity)
        }
        Command::Combine { frozen, finetuned } => print(&commands::cmd_combine(
            &ws(cfg)?,
            frozen.as_deref(),
            finetuned.as_deref(),
        )?),
        Command::Repro => {
            let r = cmd_repro(&ws(cfg)?)?;
            print(&serde_json::json!({
                "oov_overall": r.oov_overall,
                "seconds": r.timings.total,
            }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = match e.downcast_ref::<CliError>() {
                Some(c) => c.to_json(),
                None => serde_json::json!({"error": "Other", "module": "cli", "message": format!("{e:#}")}),
            };
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
