use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use qnn::training::with_threads;
use qnn_experiments::{runner, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "qnn", about = "Train and sweep quantized binarized MLPs on MNIST")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set hyper.quantum.g=5pi/19`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run seed (for `sweep`, replaces the seed axis).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses one per core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model and write its metrics log and checkpoint.
    Train,
    /// Train one model per (a, g, seed) and write sweep.csv.
    Sweep,
    /// Evaluate a checkpoint on the validation subset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also report the error for 1..=N shots (written to shots_curve.csv).
        #[arg(long, value_name = "N")]
        shots_curve: Option<usize>,
    },
    /// Check that the configured IDX files parse.
    FetchCheck,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut overrides = cli.overrides.clone();
    if let Some(out) = &cli.out {
        overrides.push(format!("out_dir={}", toml::Value::String(out.display().to_string())));
    }
    if let Some(seed) = cli.seed {
        overrides.push(format!("hyper.seed={seed}"));
        overrides.push(format!("sweep.seeds=[{seed}]"));
    }
    RunConfig::load(cli.config.as_deref(), &overrides)
}

fn run(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Train => {
            let summary = runner::cmd_train(&config)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Sweep => {
            let rows = runner::cmd_sweep(&config)?;
            print!("{}", runner::sweep_csv(&rows));
        }
        Command::Eval { checkpoint, shots_curve } => {
            let report = runner::cmd_eval(&config, checkpoint, *shots_curve)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::FetchCheck => {
            for check in runner::cmd_fetch_check(&config.data)? {
                println!("ok  {:<6} {:>6}  {}", check.kind, check.count, check.path.display());
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    with_threads(cli.threads, || run(&cli))?
}
