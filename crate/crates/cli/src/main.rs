use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use doa_cli::{run, Command, RunManifest};
use doa_core::control::Variant;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CommandArg {
    /// Tune a controller with WOA and write optimum_<variant>.cfg and trace_<variant>.csv
    Tune,
    /// Simulate one controller on the cohort and write trajectories and a summary
    Evaluate,
    /// Simulate two controllers and write paired metrics and overlaid trajectories
    Compare,
    /// Regenerate every summary in --out from its trajectories and check it
    Replay,
}

/// Closed-loop propofol anesthesia controller tuning and evaluation.
///
/// Exit codes: 0 success, 2 configuration or usage error, 3 numeric failure.
#[derive(Debug, Parser)]
#[command(name = "doa", version)]
struct Args {
    #[arg(value_enum)]
    command: CommandArg,
    /// Experiment file (TOML); the built-in default experiment if omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the WOA seed of the experiment
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Controller file; give twice for compare
    #[arg(long)]
    controller: Vec<PathBuf>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|_| format!("expected one of pid, fopid, fofpid, got '{s}'"))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let manifest = RunManifest {
        command: match args.command {
            CommandArg::Tune => Command::Tune,
            CommandArg::Evaluate => Command::Evaluate,
            CommandArg::Compare => Command::Compare,
            CommandArg::Replay => Command::Replay,
        },
        config_path: args.config,
        output_dir: args.out,
        seed: args.seed,
        variant: args.variant,
        controllers: args.controller,
    };
    match run(&manifest) {
        Ok(paths) => {
            let verb = if manifest.command == Command::Replay { "verified" } else { "wrote" };
            for p in paths {
                println!("{verb} {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
