//! `quadrep` command line: fitting, evaluation, convergence sweeps, noisy
//! data generation and denoising. Every run writes a `manifest.json` beside
//! its outputs; `quadrep replay` reruns it.

pub mod data;
pub mod error;
pub mod fit;
pub mod manifest;
pub mod sweep;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use error::CliError;
use manifest::{compare_outputs, RunManifest, Sink};

#[derive(Debug, Parser)]
#[command(name = "quadrep", version, about = "Quadratic-manifold function representations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OutputArgs {
    /// Directory for all outputs and the run manifest
    #[arg(long, default_value = "quadrep-out")]
    pub out_dir: PathBuf,
    /// Also write the selection / iteration trace
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Fit a representation to a builtin function or tabulated data
    Fit(fit::FitArgs),
    /// Evaluate a stored representation
    Eval(fit::EvalArgs),
    /// Error against K for several methods
    Convergence(sweep::ConvergenceArgs),
    /// Synthetic noisy step data
    Generate(data::GenerateArgs),
    /// Denoise tabulated data with a quadratic manifold
    Denoise(data::DenoiseArgs),
    /// Rerun a recorded command from its manifest
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// manifest.json of an earlier run
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write the replayed outputs
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Compare every output byte-for-byte with the original run
    #[arg(long)]
    pub verify: bool,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Eval(_) => "eval",
            Command::Convergence(_) => "convergence",
            Command::Generate(_) => "generate",
            Command::Denoise(_) => "denoise",
            Command::Replay(_) => "replay",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Fit(a) => Some(a.seed),
            Command::Convergence(a) => Some(a.seed),
            Command::Generate(a) => a.seed,
            _ => None,
        }
    }

    fn output_mut(&mut self) -> Option<&mut OutputArgs> {
        match self {
            Command::Fit(a) => Some(&mut a.output),
            Command::Eval(a) => Some(&mut a.output),
            Command::Convergence(a) => Some(&mut a.output),
            Command::Generate(a) => Some(&mut a.output),
            Command::Denoise(a) => Some(&mut a.output),
            Command::Replay(_) => None,
        }
    }

    /// Make input paths absolute so a manifest replays from any directory.
    fn resolve_inputs(&mut self) -> Result<(), CliError> {
        let fix = |p: &mut PathBuf| -> Result<(), CliError> {
            *p = p
                .canonicalize()
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            Ok(())
        };
        match self {
            Command::Fit(a) => a.input.as_mut().map(fix).transpose().map(|_| ()),
            Command::Eval(a) => {
                fix(&mut a.rep)?;
                a.points.as_mut().map(fix).transpose().map(|_| ())
            }
            Command::Denoise(a) => {
                fix(&mut a.input)?;
                a.truth.as_mut().map(fix).transpose().map(|_| ())
            }
            _ => Ok(()),
        }
    }
}

/// Result of a successful command: lines for the terminal and where the
/// outputs went.
#[derive(Debug)]
pub struct Outcome {
    pub summary: Vec<String>,
    pub out_dir: PathBuf,
    pub outputs: Vec<String>,
}

pub fn run(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Replay(args) => replay(args),
        other => {
            let mut resolved = other.clone();
            resolved.resolve_inputs()?;
            execute(&resolved)
        }
    }
}

fn execute(command: &Command) -> Result<Outcome, CliError> {
    let mut command = command.clone();
    let out_dir = command
        .output_mut()
        .map(|o| o.out_dir.clone())
        .ok_or_else(|| CliError::Usage("nested replay is not supported".into()))?;
    let mut sink = Sink::create(&out_dir)?;
    let summary = match &command {
        Command::Fit(a) => fit::run_fit(a, &mut sink)?,
        Command::Eval(a) => fit::run_eval(a, &mut sink)?,
        Command::Convergence(a) => sweep::run_convergence(a, &mut sink)?,
        Command::Generate(a) => data::run_generate(a, &mut sink)?,
        Command::Denoise(a) => data::run_denoise(a, &mut sink)?,
        Command::Replay(_) => unreachable!(),
    };
    let outputs = sink.into_files();
    RunManifest::new(&command, outputs.clone()).write(&out_dir)?;
    Ok(Outcome {
        summary,
        out_dir,
        outputs,
    })
}

fn replay(args: &ReplayArgs) -> Result<Outcome, CliError> {
    let manifest = RunManifest::load(&args.manifest)?;
    let mut command = manifest.config.clone();
    let output = command
        .output_mut()
        .ok_or_else(|| CliError::Usage("manifest records a replay".into()))?;
    let original_dir = output.out_dir.clone();
    output.out_dir = args.out_dir.clone();
    let mut outcome = execute(&command)?;
    if manifest.version != env!("CARGO_PKG_VERSION") {
        outcome.summary.push(format!(
            "warning: manifest written by version {}, replayed with {}",
            manifest.version,
            env!("CARGO_PKG_VERSION")
        ));
    }
    if args.verify {
        let source_dir = args
            .manifest
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let present = manifest.outputs.iter().all(|f| source_dir.join(f).exists());
        let source_dir = if present {
            source_dir.to_path_buf()
        } else {
            original_dir
        };
        compare_outputs(&manifest.outputs, &source_dir, &args.out_dir)?;
        outcome
            .summary
            .push(format!("verified {} outputs byte-identical", manifest.outputs.len()));
    }
    Ok(outcome)
}

/// Worker pool sized by `QUADREP_THREADS` (unset or 0: one per core).
pub fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let threads = match std::env::var("QUADREP_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("QUADREP_THREADS must be an integer, got '{v}'")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(e.to_string()))
}

pub(crate) fn parse_function(s: &str) -> Result<quadrep::functions::BuiltinFunction, String> {
    s.parse().map_err(|e: quadrep::Error| e.to_string())
}

/// Shortest round-trip decimal; `NaN`/`inf` spelled out.
pub(crate) fn num(v: f64) -> String {
    format!("{v:?}")
}
