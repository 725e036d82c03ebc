use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ddcomm_cli::commands::{load_config, run, Command, RunOptions};
use ddcomm_cli::config::Format;

/// Delay-Doppler signaling experiments.
#[derive(Debug, Parser)]
#[command(name = "ddcomm", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML or JSON experiment file; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `outputs.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seed (overrides `channel.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo sweeps; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1);
    let result = load_config(cli.config.as_deref()).and_then(|(cfg, text)| {
        let opts = RunOptions { out: cli.out.clone(), seed: cli.seed, threads, format: cli.format };
        run(cli.command, cfg, text.as_deref(), &opts)
    });
    match result {
        Ok(manifest) => {
            eprintln!("{}: wrote {}", cli.command.name(), manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ddcomm {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
