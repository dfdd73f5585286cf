use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use redtide::config::{RunConfig, SplitChoice};
use redtide::data::io::RasterFormat;
use redtide::training::TrainMode;
use redtide::{Error, ErrorClass};

mod commands;

/// Sparse red-tide detection: data generation, training, inference and
/// evaluation.
#[derive(Debug, Parser)]
#[command(name = "redtide", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration file (TOML).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set train.sampler.window_count=50`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory; relative paths resolve under REDTIDE_OUT if set.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for inference; results do not depend on the count.
    #[arg(long, default_value_t = 1, global = true)]
    workers: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_format)]
        format: Option<RasterFormat>,
    },
    /// Train a detector (or an HSI classifier).
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<TrainMode>,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from a checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many iterations and write `interrupted.ckpt`.
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Score rasters with a trained detector.
    Infer {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, value_parser = parse_split)]
        split: Option<SplitChoice>,
    },
    /// Compute ROC and ROC-variation curves from score maps.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory of score maps written by `infer`.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, value_parser = parse_split)]
        split: Option<SplitChoice>,
    },
    /// Dump layer-8 features of positives, real and generated negatives.
    ExportFeatures {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        per_group: Option<usize>,
    },
    /// Print the effective configuration.
    Config {
        /// Print the annotated defaults instead.
        #[arg(long)]
        defaults: bool,
    },
}

fn parse_format(s: &str) -> Result<RasterFormat, String> {
    match s {
        "native-binary" | "native" => Ok(RasterFormat::NativeBinary),
        "flat-array-with-sidecar" | "flat" => Ok(RasterFormat::FlatArrayWithSidecar),
        _ => Err(format!("unknown format {s:?} (native-binary, flat-array-with-sidecar)")),
    }
}

fn parse_mode(s: &str) -> Result<TrainMode, String> {
    match s {
        "rtd-single" => Ok(TrainMode::RtdSingle),
        "rtd-3stage" => Ok(TrainMode::RtdThreeStage),
        "hsi" => Ok(TrainMode::Hsi),
        _ => Err(format!("unknown mode {s:?} (rtd-single, rtd-3stage, hsi)")),
    }
}

fn parse_split(s: &str) -> Result<SplitChoice, String> {
    match s {
        "train" => Ok(SplitChoice::Train),
        "test" => Ok(SplitChoice::Test),
        "all" => Ok(SplitChoice::All),
        _ => Err(format!("unknown split {s:?} (train, test, all)")),
    }
}

/// Exit status for each error class.
fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_target(false)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> redtide::Result<()> {
    let mut cfg = RunConfig::load(cli.common.config.as_deref(), &cli.common.overrides)?;
    if cli.common.workers == 0 {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    let ctx = commands::Context {
        out_flag: cli.common.out,
        workers: cli.common.workers,
    };
    match cli.command {
        Command::Synth { seed, format } => {
            if let Some(s) = seed {
                cfg.synth.seed = s;
            }
            if let Some(f) = format {
                cfg.synth.format = f;
            }
            commands::synth(&cfg, &ctx)
        }
        Command::Train {
            data,
            mode,
            seed,
            resume,
            max_iterations,
        } => {
            set(&mut cfg.data, data);
            if let Some(m) = mode {
                cfg.train.mode = m;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            commands::train(&cfg, &ctx, resume.as_deref(), max_iterations)
        }
        Command::Infer {
            checkpoint,
            data,
            window,
            split,
        } => {
            set(&mut cfg.data, data);
            set(&mut cfg.infer.checkpoint, checkpoint);
            if let Some(w) = window {
                cfg.infer.window = w;
            }
            if let Some(s) = split {
                cfg.infer.split = s;
            }
            commands::infer(&cfg, &ctx)
        }
        Command::Eval { data, scores, split } => {
            set(&mut cfg.data, data);
            set(&mut cfg.eval.scores, scores);
            if let Some(s) = split {
                cfg.infer.split = s;
            }
            commands::eval(&cfg, &ctx)
        }
        Command::ExportFeatures {
            checkpoint,
            data,
            per_group,
        } => {
            set(&mut cfg.data, data);
            set(&mut cfg.features.checkpoint, checkpoint);
            if let Some(n) = per_group {
                cfg.features.per_group = n;
            }
            commands::export_features(&cfg, &ctx)
        }
        Command::Config { defaults } => {
            if defaults {
                print!("{}", redtide::config::DEFAULT_CONFIG_TOML);
            } else {
                print!("{}", cfg.to_toml());
            }
            Ok(())
        }
    }
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}
