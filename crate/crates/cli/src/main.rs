use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uctrl::cli::{cmd_ablate, cmd_cluster, cmd_eval, cmd_generate, cmd_train, load_config, RunOptions};

#[derive(Parser)]
#[command(name = "uctrl", version, about = "Unsupervised closed-loop transcription experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train encoder and decoder, writing telemetry and checkpoints
    Train(Common),
    /// Fit the cluster head on encoded training features
    Cluster(Common),
    /// Decode samples along per-cluster principal directions
    Generate(Common),
    /// Linear probe and cosine diagnostics on the test split
    Eval(Common),
    /// Train and score each variant in ablate.variants
    Ablate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding output.dir
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, overriding the config
    #[arg(long)]
    seed: Option<u64>,
    /// Accept checkpoints written under a different config
    #[arg(long)]
    force: bool,
}

fn run(cli: Cli) -> uctrl::Result<()> {
    let (common, which) = match &cli.command {
        Command::Train(c) => (c, "train"),
        Command::Cluster(c) => (c, "cluster"),
        Command::Generate(c) => (c, "generate"),
        Command::Eval(c) => (c, "eval"),
        Command::Ablate(c) => (c, "ablate"),
    };
    let opts = RunOptions {
        out: common.out.clone(),
        seed: common.seed,
        force: common.force,
    };
    let cfg = load_config(&common.config, &opts)?;
    let outcome = match which {
        "train" => cmd_train(&cfg, opts.force)?,
        "cluster" => cmd_cluster(&cfg, opts.force)?,
        "generate" => cmd_generate(&cfg, opts.force)?,
        "eval" => cmd_eval(&cfg, opts.force)?,
        _ => cmd_ablate(&cfg)?,
    };
    for n in &outcome.notices {
        eprintln!("uctrl {which}: {n}");
    }
    for f in &outcome.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("uctrl: {e}");
            ExitCode::FAILURE
        }
    }
}
