//! Command-line surface of the benchmark harness.
//!
//! Subcommands: `ingest | score | attack | quality | eval | overhead |
//! scenario | report | demo`. Each reads a JSON config (`--config`) and an
//! append-only results store (`--out` overrides the config's `out_dir`).

mod commands;
mod demo;
mod runtime;

pub use demo::write_demo;

use clap::{Parser, Subcommand};
use evadebench_core::{Error, Result};

use commands::Session;

#[derive(Parser, Debug)]
#[command(
    name = "evadebench",
    about = "Benchmark harness for text-humanization attacks against machine-generated-text detectors",
    version
)]
pub struct Cli {
    /// Path to the JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<String>,

    /// Restrict work to one dataset by name.
    #[arg(long, global = true)]
    pub dataset: Option<String>,

    /// Comma-separated detector list (overrides the config).
    #[arg(long, global = true, value_delimiter = ',')]
    pub detector: Option<Vec<String>>,

    /// Comma-separated attack list (restricts the configured attacks).
    #[arg(long, global = true, value_delimiter = ',')]
    pub attack: Option<Vec<String>>,

    /// Enable the quality-preserving plug-in regardless of the config.
    #[arg(long, global = true)]
    pub qpa: bool,

    /// Blend the named attacks sentence-by-sentence, e.g. `--blend dipper,raft`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub blend: Option<Vec<String>>,

    /// Override the top-level seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Persist per-step attack traces.
    #[arg(long, global = true)]
    pub trace: bool,

    /// Override the output directory.
    #[arg(long, global = true)]
    pub out: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate, split, and store the configured datasets.
    Ingest,
    /// Score all samples with the configured detectors (clean texts).
    Score,
    /// Run the configured attacks over machine test samples.
    Attack,
    /// Compute before/after quality reports for attack outcomes.
    Quality,
    /// Evaluate detectors on clean and attacked text.
    Eval,
    /// Measure wall time and memory per attack over length buckets.
    Overhead,
    /// Run adversarial-training scenarios (known train attack, unknown test attacks).
    Scenario,
    /// Aggregate results and emit CSV tables plus the three-axis summary.
    Report,
    /// Write a ready-to-run synthetic dataset and config into --out.
    Demo,
}

/// Run the CLI; returns the human-readable status line.
pub fn run(cli: Cli) -> Result<String> {
    if let Command::Demo = cli.command {
        let out = cli
            .out
            .clone()
            .ok_or_else(|| Error::Config("demo needs --out DIR".into()))?;
        return demo::write_demo(&out, cli.seed.unwrap_or(13));
    }

    let config_path = cli
        .config
        .clone()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let mut session = Session::load(&config_path)?;
    apply_overrides(&mut session, &cli)?;

    match cli.command {
        Command::Ingest => session.ingest(),
        Command::Score => session.score(),
        Command::Attack => session.attack(cli.attack.as_deref()),
        Command::Quality => session.quality(),
        Command::Eval => session.eval(),
        Command::Overhead => session.overhead(cli.attack.as_deref()),
        Command::Scenario => session.scenario(),
        Command::Report => session.report(),
        Command::Demo => unreachable!("handled above"),
    }
}

fn apply_overrides(session: &mut Session, cli: &Cli) -> Result<()> {
    let mut changed = false;
    if let Some(out) = &cli.out {
        session.config.out_dir = out.clone();
        changed = true;
    }
    if let Some(seed) = cli.seed {
        session.config.seed = seed;
        changed = true;
    }
    if let Some(detectors) = &cli.detector {
        session.config.detectors = detectors.clone();
        changed = true;
    }
    if let Some(dataset) = &cli.dataset {
        session.config.datasets.retain(|d| &d.name == dataset);
        if session.config.datasets.is_empty() {
            return Err(Error::UnknownRegistryName {
                registry: "dataset".into(),
                name: dataset.clone(),
            });
        }
        changed = true;
    }
    if cli.qpa {
        session.config.qpa.enabled = true;
        changed = true;
    }
    if let Some(blend) = &cli.blend {
        session.config.blend = Some(evadebench_core::config::BlendConfig {
            attacks: blend.clone(),
            policy: "alternate".into(),
            context_window: 0,
        });
        changed = true;
    }
    session.config.validate()?;
    if changed {
        session.rehash()?;
    }
    Ok(())
}

/// Entry point used by `main`: parse, run, and render errors as a
/// machine-readable record on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own help/usage text
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(message) => {
            println!("{message}");
            0
        }
        Err(e) => {
            let record = serde_json::json!({
                "error": e.to_string(),
                "kind": error_kind(&e),
            });
            eprintln!("{record}");
            1
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::MissingStream { .. } => "missing_stream",
        Error::ConfigHashMismatch { .. } => "config_hash_mismatch",
        Error::UnknownRegistryName { .. } => "unknown_registry_name",
        Error::Config(_) => "config",
        Error::Http { .. } => "http",
        _ => "run_failure",
    }
}
