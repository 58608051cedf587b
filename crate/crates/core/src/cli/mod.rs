//! Command-line front end: config-driven commands writing CSV tables and JSON
//! summaries into an output directory.

mod commands;
pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use commands::{check_tensors, engine_demo, evolve_photon, scan_rates};
pub use config::RunConfig;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    CheckTensors,
    EvolvePhoton,
    ScanRates,
    EngineDemo,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CheckTensors => "check-tensors",
            Command::EvolvePhoton => "evolve-photon",
            Command::ScanRates => "scan-rates",
            Command::EngineDemo => "engine-demo",
        }
    }
}

/// Failure classes mapped onto process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("check failed: {0}")]
    Check(String),
    #[error("diverged: {0}")]
    Diverged(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Library(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Library(Error::Domain(_)) => 2,
            CliError::Diverged(_) | CliError::Library(Error::Numerical(_)) => 3,
            CliError::Check(_) | CliError::Io(_) | CliError::Library(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Loads the config and runs one command.
pub fn run(command: Command, config: &Path, out: &Path) -> CliResult<()> {
    let cfg = RunConfig::load(config).map_err(CliError::Config)?;
    run_with(command, &cfg, out)
}

pub fn run_with(command: Command, cfg: &RunConfig, out: &Path) -> CliResult<()> {
    cfg.validate().map_err(CliError::Config)?;
    fs::create_dir_all(out)?;
    let out = Output { dir: out.to_path_buf(), command, config: cfg.to_pretty_json() };
    match command {
        Command::CheckTensors => check_tensors(cfg, &out),
        Command::EvolvePhoton => evolve_photon(cfg, &out),
        Command::ScanRates => scan_rates(cfg, &out),
        Command::EngineDemo => engine_demo(cfg, &out),
    }
}

/// Writer for one command's output directory.
pub struct Output {
    dir: PathBuf,
    command: Command,
    config: String,
}

/// Shortest round-trip representation, so identical runs give identical bytes.
pub(crate) fn num(x: f64) -> String {
    format!("{x:e}")
}

impl Output {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn header(&self, extra: &[String]) -> String {
        let mut s = String::new();
        writeln!(s, "# gdecoh {} v{}", self.command.name(), env!("CARGO_PKG_VERSION")).unwrap();
        for line in extra {
            writeln!(s, "# {line}").unwrap();
        }
        writeln!(s, "# config:").unwrap();
        for line in self.config.lines() {
            writeln!(s, "#   {line}").unwrap();
        }
        s
    }

    /// CSV table; header lines are all `#`-prefixed, the last one naming the columns.
    pub fn table(&self, name: &str, notes: &[String], columns: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut s = self.header(notes);
        writeln!(s, "# {}", columns.join(",")).unwrap();
        for r in rows {
            debug_assert_eq!(r.len(), columns.len());
            writeln!(s, "{}", r.join(",")).unwrap();
        }
        fs::write(self.path(name), s)?;
        Ok(())
    }

    /// JSON summary with the resolved config embedded.
    pub fn summary<T: Serialize>(&self, name: &str, body: &T) -> CliResult<()> {
        let config: serde_json::Value = serde_json::from_str(&self.config).expect("config is JSON");
        let doc = serde_json::json!({
            "command": self.command.name(),
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "result": body,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("summary serializes");
        text.push('\n');
        fs::write(self.path(name), text)?;
        Ok(())
    }
}
