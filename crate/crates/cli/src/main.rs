use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cpdg_cli::{exit, run, Command, Failure, Invocation};

#[derive(Parser)]
#[command(name = "cpdg", version, about = "Contact process on dynamical graphs: simulation and bounds")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "CPDG_THREADS")]
    threads: Option<usize>,

    /// Directory for artifacts; without it only the report is printed.
    #[arg(long, global = true, env = "CPDG_OUT")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Survival estimates from the root over a grid of infection rates.
    Simulate,
    /// Stable-star frequencies and extinction times on restricted stars.
    Star,
    /// Transmission along a path against its lower bound.
    Path,
    /// Phase regime of a kernel and tail class.
    Phase,
    /// Single-edge transmission law.
    EdgeLaw,
    /// Exact Markov-chain quantities on a small graph.
    Oracle,
    /// Lyapunov conditions and the admissible infection rate.
    Check,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Star => Command::Star,
            Cmd::Path => Command::Path,
            Cmd::Phase => Command::Phase,
            Cmd::EdgeLaw => Command::EdgeLaw,
            Cmd::Oracle => Command::Oracle,
            Cmd::Check => Command::Check,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| {
        if let Some(n) = cli.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::config(vec![format!("threads: {e}")]))?;
        }
        let config = cli.config.clone().ok_or_else(|| Failure::config(vec!["--config is required".into()]))?;
        run(&Invocation { command: cli.command.into(), config, seed: cli.seed, out: cli.out.clone() })
    })();
    match result {
        Ok((text, code)) => {
            print!("{text}");
            ExitCode::from(code as u8)
        }
        Err(f) => {
            eprintln!("{}", f.report());
            ExitCode::from(f.code.clamp(exit::ASSERTION, 255) as u8)
        }
    }
}
