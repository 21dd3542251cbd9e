use std::path::{Path, PathBuf};
use std::process::ExitCode;

use activscope::bench::{
    resolve_tag_file, run_exp1, run_exp2, run_exp3, run_exp4, run_viz, write_summary, ExperimentConfig, Workspace,
};
use activscope::nn::{Preset, Tap};
use activscope::parallel::{init_thread_pool, Execution};
use activscope::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "activscope",
    version,
    about = "Activation-feature interpretability workbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment config (JSON). Defaults to the mini_alex preset with
    /// default settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory shared by all stages of one config.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate annotated scenes.
    Synth(Common),
    /// Sample the train and test patch sets.
    Patch(Common),
    /// Train the end-to-end network.
    Train(Common),
    /// Extract features at a tap.
    Extract {
        #[command(flatten)]
        common: Common,
        /// flat_conv, fc1 or gap; defaults to the config's tap.
        #[arg(long)]
        tap: Option<Tap>,
    },
    /// Export per-channel top-k galleries.
    Viz {
        #[command(flatten)]
        common: Common,
        /// Patches per channel; defaults to the config's `k`.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Classifier comparison.
    Exp1(Common),
    /// Galleries with motif purity and suggested tags.
    Exp2(Common),
    /// Feature reduction by global average pooling.
    Exp3(Common),
    /// Feature selection by channel tags and importance.
    Exp4 {
        #[command(flatten)]
        common: Common,
        /// Channel tag file; overrides the config's `tags`.
        #[arg(long)]
        tags: Option<PathBuf>,
    },
    /// Collect every experiment report under --out.
    Report(Common),
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
            Error::MissingFile(p) => Error::Config(format!("config file {} not found", p.display())),
            other => other,
        })?,
        None => ExperimentConfig::new(Preset::MiniAlex),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg.with_seed(cfg.seed))
}

fn open(common: &Common) -> Result<(Workspace, ExperimentConfig)> {
    let cfg = load_config(common)?;
    let exec = if common.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    Ok((Workspace::open(&common.out, &cfg, exec)?, cfg))
}

fn show(path: &Path) {
    println!("wrote {}", path.display());
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(c) => {
            let (ws, _) = open(&c)?;
            let scenes = ws.scenes()?;
            println!("{} scenes", scenes.len());
            show(&ws.root().join("scenes"));
        }
        Command::Patch(c) => {
            let (ws, _) = open(&c)?;
            let d = ws.datasets()?;
            println!(
                "train {} patches, test {} patches",
                d.train.records.len(),
                d.test.records.len()
            );
            show(&ws.root().join("data"));
        }
        Command::Train(c) => {
            let (ws, _) = open(&c)?;
            let log = ws.training_log()?;
            if let (Some(first), Some(last)) = (log.loss_curve.first(), log.loss_curve.last()) {
                println!("loss {first:.5} -> {last:.5} over {} epochs", log.loss_curve.len());
            }
            show(&ws.root().join("model"));
        }
        Command::Extract { common, tap } => {
            let (ws, cfg) = open(&common)?;
            let tap = tap.unwrap_or(cfg.tap);
            let f = ws.features(tap)?;
            println!(
                "{tap}: train {}x{}, test {}x{}",
                f.train.n(),
                f.train.d(),
                f.test.n(),
                f.test.d()
            );
            show(&ws.root().join("features"));
        }
        Command::Viz { common, k } => {
            let (ws, cfg) = open(&common)?;
            let k = k.unwrap_or(cfg.k);
            if k == 0 {
                return Err(Error::Config("--k must be >= 1".into()));
            }
            let g = run_viz(&ws, k)?;
            println!("{} channels, top {}", g.channels.len(), g.k);
            show(&ws.root().join("gallery"));
        }
        Command::Exp1(c) => print!("{}", run_exp1(&open(&c)?.0)?.to_text()),
        Command::Exp2(c) => print!("{}", run_exp2(&open(&c)?.0)?.to_text()),
        Command::Exp3(c) => print!("{}", run_exp3(&open(&c)?.0)?.to_text()),
        Command::Exp4 { common, tags } => {
            let (ws, _) = open(&common)?;
            let tag_file = resolve_tag_file(&ws, tags.as_deref())?;
            print!("{}", run_exp4(&ws, &tag_file)?.to_text());
        }
        Command::Report(c) => {
            let found = write_summary(&c.out)?;
            println!("collected {}", found.join(", "));
            show(&c.out.join("report.txt"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    init_thread_pool();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.kind());
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
