//! `polymer`: experiment runner for polymer-core.

mod artifacts;
mod config;
mod error;
mod experiments;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use artifacts::{Artifacts, RunManifest};
use config::{Experiment, ExperimentConfig};
use error::CliError;
use experiments::verify::VerifyCase;

#[derive(Debug, Parser)]
#[command(name = "polymer", version, about = "Directed polymer experiments: exact recursions and Monte Carlo")]
struct Cli {
    /// JSON experiment config; every field is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, env = "POLYMER_THREADS")]
    threads: Option<usize>,
    /// Output directory (default `runs/<experiment>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Oracle and identity gate; exits 1 and writes failures.json on any failure.
    Verify {
        /// Replay cases from a failures.json instead of the default list.
        #[arg(long)]
        case: Option<PathBuf>,
    },
    /// Moment curve, p*, q* and the phase summary at one beta.
    Moments,
    /// Exact second-moment scan over a beta grid.
    ScanBeta,
    /// Replicates of X_n^f over an n grid and the decay-rate fit.
    XiRate,
    /// Grid construction, site detection and the locality audit.
    Sites,
    /// Overlap traces, the stochastic integral and conditional localization.
    Localization,
    /// Martingale traces and level-set profiles.
    Qv,
    /// Re-runs a manifest and compares output checksums.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("polymer: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let (kind, cases) = match &cli.command {
        Command::Replay { manifest } => return replay(manifest, cli.out.as_deref(), cli.threads),
        Command::Verify { case: Some(path) } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Schema(format!("cannot read {}: {e}", path.display())))?;
            let cases: Vec<VerifyCase> =
                serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
            (Experiment::Verify, Some(cases))
        }
        Command::Verify { case: None } => (Experiment::Verify, None),
        Command::Moments => (Experiment::Moments, None),
        Command::ScanBeta => (Experiment::ScanBeta, None),
        Command::XiRate => (Experiment::XiRate, None),
        Command::Sites => (Experiment::Sites, None),
        Command::Localization => (Experiment::Localization, None),
        Command::Qv => (Experiment::Qv, None),
    };
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if cli.threads.is_some() {
        config.threads = cli.threads;
    }
    let out = cli
        .out
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| Path::new("runs").join(kind.name()));
    let manifest = execute(kind, &config, cases, &out)?;
    println!(
        "{}: wrote {} files to {} ({:.2} s)",
        kind.name(),
        manifest.files.len() + 1,
        out.display(),
        manifest.wall_time_s
    );
    Ok(())
}

/// Runs one experiment into `out` and writes its manifest. A failed
/// verification still leaves complete outputs behind before erroring.
fn execute(
    kind: Experiment,
    config: &ExperimentConfig,
    cases: Option<Vec<VerifyCase>>,
    out: &Path,
) -> Result<RunManifest, CliError> {
    config.validate(kind)?;
    let mut art = Artifacts::create(out)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| CliError::Other(e.into()))?;
    let start = Instant::now();
    let result = pool.install(|| match kind {
        Experiment::Verify => {
            let cases = cases.unwrap_or_else(|| experiments::verify::cases(config));
            experiments::verify::run(config, cases, &mut art)
        }
        Experiment::Moments => experiments::moments::run_moments(config, &mut art),
        Experiment::ScanBeta => experiments::moments::run_scan(config, &mut art),
        Experiment::XiRate => experiments::xi::run(config, &mut art),
        Experiment::Sites => experiments::sites::run(config, &mut art),
        Experiment::Localization => experiments::localization::run(config, &mut art),
        Experiment::Qv => experiments::qv::run(config, &mut art),
    });
    match result {
        Ok(()) => art.finish(kind, config, start.elapsed().as_secs_f64()),
        Err(e @ CliError::Failed(_)) => {
            art.finish(kind, config, start.elapsed().as_secs_f64())?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}

fn replay(path: &Path, out: Option<&Path>, threads: Option<usize>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Schema(format!("cannot read {}: {e}", path.display())))?;
    let recorded: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| {
        path.parent().unwrap_or(Path::new(".")).join("replay")
    });
    let mut config = recorded.config.clone();
    config.threads = threads;
    // A verify run that failed records its failures; replay the default list all the same.
    let fresh = match execute(recorded.experiment, &config, None, &out) {
        Ok(m) => m,
        Err(CliError::Failed(_)) => serde_json::from_slice(&std::fs::read(out.join(artifacts::MANIFEST))?)?,
        Err(e) => return Err(e),
    };
    if fresh.config_hash != recorded.config_hash {
        return Err(CliError::Failed("config hash differs from the manifest".into()));
    }
    let mismatched: Vec<&String> = recorded
        .files
        .iter()
        .filter(|(name, sum)| fresh.files.get(*name) != Some(sum))
        .map(|(name, _)| name)
        .chain(fresh.files.keys().filter(|k| !recorded.files.contains_key(*k)))
        .collect();
    if !mismatched.is_empty() {
        return Err(CliError::Failed(format!("checksums differ for {mismatched:?}")));
    }
    println!("replay: {} files match ({})", fresh.files.len(), out.display());
    Ok(())
}
