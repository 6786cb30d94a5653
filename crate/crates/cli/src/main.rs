use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use wlap_core::harness::{run_experiment, ExperimentConfig, ExperimentKind, ExperimentOutput, SelftestSection};

#[derive(Parser)]
#[command(name = "wlap", version, about = "Spectral estimation for weighted Laplacians on the torus")]
struct Cli {
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant suite; exits nonzero on any failure.
    Selftest {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run only these checks.
        #[arg(long = "check")]
        checks: Vec<String>,
    },
    /// Export the pencil spectrum of a density.
    Spectrum(ConfigArg),
    DensityRate(ConfigArg),
    EigenspaceRate(ConfigArg),
    EigenvalueRate(ConfigArg),
    Efficiency(ConfigArg),
    PerturbationBound(ConfigArg),
}

fn load(path: &Path, expected: ExperimentKind) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if cfg.kind != expected {
        bail!("{} is a {} config, not {}", path.display(), cfg.kind.as_str(), expected.as_str());
    }
    Ok(cfg)
}

fn config_for(cmd: &Command) -> Result<ExperimentConfig> {
    let (path, kind) = match cmd {
        Command::Selftest { config, checks } => {
            let mut cfg = match config {
                Some(p) => load(p, ExperimentKind::Selftest)?,
                None => ExperimentConfig::from_toml("kind = \"selftest\"\nname = \"selftest\"\nseed = 0\n")?,
            };
            if !checks.is_empty() {
                cfg.selftest = Some(SelftestSection { checks: checks.clone() });
            }
            return Ok(cfg);
        }
        Command::Spectrum(a) => (&a.config, ExperimentKind::Spectrum),
        Command::DensityRate(a) => (&a.config, ExperimentKind::DensityRate),
        Command::EigenspaceRate(a) => (&a.config, ExperimentKind::EigenspaceRate),
        Command::EigenvalueRate(a) => (&a.config, ExperimentKind::EigenvalueRate),
        Command::Efficiency(a) => (&a.config, ExperimentKind::Efficiency),
        Command::PerturbationBound(a) => (&a.config, ExperimentKind::PerturbationBound),
    };
    load(path, kind)
}

fn summarize(out: &ExperimentOutput) {
    for c in &out.checks {
        println!("[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(fit) = out.report.get("fit").and_then(|f| f.get("slope")) {
        println!("fitted slope: {fit}");
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let mut cfg = config_for(&cli.command)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = run_experiment(&cfg)?;
    summarize(&out);
    for p in out.write(&cli.out)? {
        println!("wrote {}", p.display());
    }
    Ok(out.passed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
