//! `precond`: command-line front end for the analysis and experiment harness.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use precond::error::{Error, Result};
use precond::experiments::{
    self, analyze, failures, load_config, write_outputs, ExperimentConfig, ExperimentKind, CSV_COLUMNS_HELP,
};

#[derive(Parser, Debug)]
#[command(name = "precond", version, about = "Condition numbers and MCMC experiments under linear preconditioning")]
#[command(after_help = CSV_COLUMNS_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config file; fields override the preset's.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset (paper-4.1, paper-4.2-small, paper-4.2, paper-4.3-small,
    /// paper-4.3, verify-bounds, analyze).
    #[arg(long)]
    preset: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the full published scale for the preset.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Condition numbers, measured constants and bounds for one model.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Model file; the 5-dimensional Gaussian fixture when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Preconditioner spec (identity, dense, diag, design, additive,
        /// mode, file:<path>); repeatable.
        #[arg(long = "precond")]
        precond: Vec<String>,
    },
    /// Run an experiment and write its CSV and bounds files.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Check the perturbation bounds over seeded model instances.
    VerifyBounds {
        #[command(flatten)]
        common: Common,
        /// Instances per model family.
        #[arg(long)]
        instances: Option<usize>,
    },
}

fn resolve(common: &Common, default_preset: Option<&str>) -> Result<ExperimentConfig> {
    let preset = common.preset.as_deref().or(if common.config.is_none() { default_preset } else { None });
    let mut cfg = load_config(common.config.as_deref(), preset, common.paper_scale)?;
    if let Some(s) = common.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn run_analyze(mut cfg: ExperimentConfig, model: Option<PathBuf>, precond: Vec<String>) -> Result<()> {
    if cfg.experiment != ExperimentKind::Analyze {
        return Err(Error::Config(format!("config is for `{}`, not analyze", cfg.experiment.name())));
    }
    if model.is_some() {
        cfg.model_file = model;
    }
    if !precond.is_empty() {
        cfg.preconditioners = precond;
    }
    cfg.validate()?;
    cfg.prepare_output()?;
    let report = analyze(&cfg)?;
    print!("{report}");
    let path = cfg.output_dir.join("analyze_bounds.json");
    report.write_json(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_experiment(cfg: ExperimentConfig) -> Result<()> {
    if cfg.experiment == ExperimentKind::Analyze {
        return run_analyze(cfg, None, Vec::new());
    }
    cfg.validate()?;
    cfg.prepare_output()?;
    let result = experiments::run(&cfg)?;
    let failed = result.rows.iter().filter(|r| !r.is_ok()).count();
    if !result.rows.is_empty() {
        println!("{}: {} chains, {} failed", cfg.experiment.name(), result.rows.len(), failed);
    }
    if cfg.experiment == ExperimentKind::VerifyBounds {
        let n = result.verify.len();
        let fails = failures(&result.verify);
        let total: usize = fails.values().sum();
        println!("verify-bounds: {n} checks, {total} failed");
        for (k, v) in fails {
            println!("  {k}: {v}");
        }
    }
    for p in write_outputs(&result, &cfg.output_dir)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze { common, model, precond } => run_analyze(resolve(&common, Some("analyze"))?, model, precond),
        Command::Experiment { common } => {
            if common.config.is_none() && common.preset.is_none() {
                return Err(Error::Config("experiment needs --config or --preset".into()));
            }
            run_experiment(resolve(&common, None)?)
        }
        Command::VerifyBounds { common, instances } => {
            let mut cfg = resolve(&common, Some("verify-bounds"))?;
            if cfg.experiment != ExperimentKind::VerifyBounds {
                return Err(Error::Config(format!("config is for `{}`, not verify-bounds", cfg.experiment.name())));
            }
            if let Some(i) = instances {
                cfg.instances = i;
            }
            run_experiment(cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_assumption_violation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
