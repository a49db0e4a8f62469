mod commands;
mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use har_core::eval::Protocol;
use har_core::{ErrorKind, Result};

use commands::{PartChoice, SynthOptions, CHECKPOINT_DIR};
use config::{resolve, Overrides};

/// Train and evaluate self-attention activity recognition models.
#[derive(Parser)]
#[command(name = "har", version)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config field by dotted path, e.g. `model.d_model=64`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Override `train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Window the configured recordings into a cache under `<out>/cache`.
    Ingest,
    /// Train, keep the best checkpoint and score it on the test split.
    Train {
        /// Replace an existing output directory.
        #[arg(long)]
        force: bool,
    },
    /// Score a checkpoint on one split.
    Eval {
        /// Checkpoint directory [default: <out>/checkpoint].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ProtocolArg::Both)]
        protocol: ProtocolArg,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Leave-one-subject-out cross validation; resumes unfinished runs.
    Loso {
        /// Discard a run made with a different config.
        #[arg(long)]
        force: bool,
    },
    /// Train and test once per window size.
    Sweep {
        /// Window sizes in samples, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
    },
    /// Export mean sensor-attention maps per predicted class.
    AttnMaps {
        /// Checkpoint directory [default: <out>/checkpoint].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Class names or indices, comma separated [default: all].
        #[arg(long, value_delimiter = ',')]
        classes: Vec<String>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Write a planted-signal dataset, its schema and a starter config.
    Synth {
        #[arg(long, default_value_t = 4)]
        subjects: usize,
        #[arg(long, default_value_t = 6)]
        channels: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        /// Channel carrying the class signal.
        #[arg(long, default_value_t = 2)]
        informative: usize,
        /// Activity segments per subject.
        #[arg(long, default_value_t = 9)]
        segments: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Sample,
    Window,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for PartChoice {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => PartChoice::Train,
            SplitArg::Val => PartChoice::Val,
            SplitArg::Test => PartChoice::Test,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let overrides = Overrides {
        sets: cli.sets,
        seed: cli.seed,
        out: cli.out.clone(),
    };
    if let Command::Synth { subjects, channels, classes, informative, segments } = cli.command {
        let dir = cli.out.unwrap_or_else(|| PathBuf::from("synthetic"));
        let opts = SynthOptions { subjects, channels, classes, informative, segments, seed: cli.seed.unwrap_or(0) };
        return commands::synth(&dir, &opts);
    }
    let r = resolve(cli.config.as_deref(), &overrides)?;
    let default_checkpoint = || PathBuf::from(&r.config.output).join(CHECKPOINT_DIR);
    match cli.command {
        Command::Ingest => commands::ingest(&r),
        Command::Train { force } => commands::train(&r, force),
        Command::Eval { checkpoint, protocol, split } => {
            let protocols = match protocol {
                ProtocolArg::Sample => vec![Protocol::SampleWise],
                ProtocolArg::Window => vec![Protocol::WindowWise],
                ProtocolArg::Both => vec![Protocol::SampleWise, Protocol::WindowWise],
            };
            commands::eval(&r, &checkpoint.unwrap_or_else(default_checkpoint), &protocols, split.into())
        }
        Command::Loso { force } => commands::loso(&r, force),
        Command::Sweep { sizes } => commands::sweep(&r, &sizes),
        Command::AttnMaps { checkpoint, classes, split } => {
            commands::attention_maps(&r, &checkpoint.unwrap_or_else(default_checkpoint), &classes, split.into())
        }
        Command::Synth { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Runtime => 4,
            })
        }
    }
}
