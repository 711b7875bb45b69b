//! Command-line front end: configuration files, command dispatch and
//! artifact writing for the `cpdg` binary.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use serde_json::json;

pub use config::{load_config, parse_config, ConfigErrors, ExperimentConfig};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// The command ran but a checked condition does not hold.
    pub const ASSERTION: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const COMPUTATION: i32 = 3;
    pub const IO: i32 = 4;
}

#[derive(Debug)]
pub struct Failure {
    pub kind: String,
    pub messages: Vec<String>,
    pub code: i32,
}

impl Failure {
    pub fn config(messages: Vec<String>) -> Self {
        Self { kind: "config".into(), messages, code: exit::CONFIG }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self { kind: "io".into(), messages: vec![format!("{}: {e}", path.display())], code: exit::IO }
    }

    /// Machine-readable report for stderr.
    pub fn report(&self) -> String {
        json!({
            "status": "error",
            "kind": self.kind,
            "exit_code": self.code,
            "errors": self.messages,
        })
        .to_string()
    }
}

impl From<cpdg::Error> for Failure {
    fn from(e: cpdg::Error) -> Self {
        let code = match e {
            cpdg::Error::Io { .. } => exit::IO,
            cpdg::Error::InvalidParameter { .. } | cpdg::Error::Parse { .. } => exit::CONFIG,
            _ => exit::COMPUTATION,
        };
        Self { kind: e.kind().into(), messages: vec![e.to_string()], code }
    }
}

impl From<ConfigErrors> for Failure {
    fn from(e: ConfigErrors) -> Self {
        Failure::config(e.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Star,
    Path,
    Phase,
    EdgeLaw,
    Oracle,
    Check,
}

pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Runs one command. On success returns the stdout report and the exit
/// code (OK, or ASSERTION when a checked condition fails).
pub fn run(inv: &Invocation) -> Result<(String, i32), Failure> {
    let mut cfg = load_config(&inv.config)?;
    if let Some(seed) = inv.seed {
        cfg.seed = seed;
    }
    let mut out = commands::Output::new(commands::artifact_dir(inv.out.as_deref(), &cfg), &cfg)?;
    let ok = match inv.command {
        Command::Simulate => commands::simulate(&cfg, &mut out).map(|_| true),
        Command::Star => commands::star(&cfg, &mut out).map(|_| true),
        Command::Path => commands::path(&cfg, &mut out),
        Command::Phase => commands::phase(&cfg, &mut out).map(|_| true),
        Command::EdgeLaw => commands::edge_law(&cfg, &mut out).map(|_| true),
        Command::Oracle => commands::oracle(&cfg, &mut out).map(|_| true),
        Command::Check => commands::check(&cfg, &mut out),
    }?;
    let text = out.finish()?;
    Ok((text, if ok { exit::OK } else { exit::ASSERTION }))
}
