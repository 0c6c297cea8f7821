//! `catproj` command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use catproj_core::harness::{self, RunConfig};
use catproj_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "catproj", version, about = "Cat-state projective measurement toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed, overriding the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Named preset (fig1b, fig1c, fig1d, fig3, fig4, fig5)
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Fock-space truncation n_max
    #[arg(long, global = true)]
    nmax: Option<usize>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, env = "CATPROJ_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Fidelity of displaced detection, homodyne and PNRD over a grid (CSV)
    FidelitySweep,
    /// Optimal displacement for a single target (JSON)
    Optimize,
    /// Simulated click table for a probe campaign (CSV)
    Simulate,
    /// Detector tomography, single run or figure scan (JSON)
    Tomography,
    /// Internal consistency checks
    Selftest,
}

/// The config file (if any) with command-line overrides applied, not yet
/// expanded against its preset.
fn read_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if common.preset.is_some() {
        cfg.preset = common.preset.clone();
    }
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if common.nmax.is_some() {
        cfg.n_max = common.nmax;
    }
    if common.out.is_some() {
        cfg.output = common.out.clone();
    }
    Ok(cfg)
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let cfg = read_config(common)?.resolved()?;
    cfg.validate()?;
    Ok(cfg)
}

/// Writes via a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn emit(cfg: &RunConfig, payload: &str) -> Result<()> {
    match &cfg.output {
        Some(path) => write_atomic(path, payload),
        None => {
            std::io::stdout().write_all(payload.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    if let Command::Selftest = cli.command {
        let cfg = match (&cli.common.config, &cli.common.preset) {
            (None, None) => None,
            _ => Some(read_config(&cli.common)?),
        };
        let report = harness::selftest(cfg.as_ref());
        print!("{}", report.text());
        if let Some(path) = &cli.common.out {
            write_atomic(path, &harness::commands::to_json(&report)?)?;
        }
        return Ok(if report.passed {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(1)
        });
    }
    let cfg = load_config(&cli.common)?;
    let payload = match cli.command {
        Command::FidelitySweep => harness::fidelity_sweep(&cfg)?,
        Command::Optimize => harness::optimize(&cfg)?,
        Command::Simulate => harness::simulate(&cfg)?,
        Command::Tomography => harness::tomography(&cfg)?,
        Command::Selftest => unreachable!(),
    };
    emit(&cfg, &payload)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            let record = serde_json::json!({
                "error": {
                    "kind": e.kind(),
                    "stage": e.stage(),
                    "message": e.to_string(),
                }
            });
            eprintln!("{record}");
            ExitCode::from(2)
        }
    }
}
