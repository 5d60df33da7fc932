use anyhow::Context;
use clap::{Parser, Subcommand};
use pmewaves::{Command, RunConfig, RunOptions};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pmewaves", version, about = "Traveling-wave solver and verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Barrier profiles and boundary data for the δ schedule.
    Planar(Common),
    /// A single truncated solve.
    Solve(Common),
    /// Full continuation with checkpoints and analysis.
    Continue {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by an earlier `continue`.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many scheduled stages.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Re-run the analysis on stored stage fields.
    Analyze(Common),
    /// The acceptance suite.
    Verify(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let (cmd, common, resume, stop_after) = match cli.command {
        Cmd::Planar(c) => (Command::Planar, c, None, None),
        Cmd::Solve(c) => (Command::Solve, c, None, None),
        Cmd::Continue { common, resume, stop_after } => (Command::Continue, common, resume, stop_after),
        Cmd::Analyze(c) => (Command::Analyze, c, None, None),
        Cmd::Verify(c) => (Command::Verify, c, None, None),
    };
    let cfg = RunConfig::load(&common.config)?;
    let opts = RunOptions {
        out: common.out,
        resume,
        stop_after,
    };
    let outcome = pmewaves::run(cmd, &cfg, &opts).with_context(|| format!("{} failed", cmd.name()))?;
    for line in &outcome.lines {
        println!("{line}");
    }
    println!("output: {}", outcome.out_dir.display());
    Ok(ExitCode::from(outcome.exit_code as u8))
}
