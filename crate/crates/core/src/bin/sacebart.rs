use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sacebart::cli::{self, RunConfig};
use sacebart::{Error, Result};

#[derive(Parser)]
#[command(
    name = "sacebart",
    version,
    about = "Survivor average causal effects with BART"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; defaults are used for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a synthetic trial with known truth.
    Simulate,
    /// Choose the BART hyperparameters by cross-validation.
    Cv,
    /// Run the sampler and store the posterior draws.
    Fit,
    /// Summarize stored draws.
    Summarize,
    /// Search for subgroups in the likely always-survivors.
    Subgroups,
    /// Convergence diagnostics of stored draws.
    Diagnose,
}

fn run(args: &Args) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.set_seed(seed);
    }
    if let Some(out) = &args.out {
        config.out = out.clone();
    }
    config.validate()?;
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let report = match args.command {
        Command::Simulate => {
            let t = cli::cmd_simulate(&config)?;
            format!(
                "oracle SACE {:.4} (se {:.4})",
                t.oracle_sace.value, t.oracle_sace.se
            )
        }
        Command::Cv => {
            let r = cli::cmd_cv(&config)?.result;
            format!("w = {}, trees = {}", r.w, r.n_trees)
        }
        Command::Fit => {
            let f = cli::cmd_fit(&config)?;
            match f.sace {
                Some(s) => format!(
                    "{} draws, SACE {:.4} [{:.4}, {:.4}]",
                    f.n_draws, s.mean, s.lower, s.upper
                ),
                None => format!("{} draws, no always-survivors imputed", f.n_draws),
            }
        }
        Command::Summarize => {
            let s = cli::cmd_summarize(&config)?;
            format!(
                "SACE {:.4} [{:.4}, {:.4}], p = {}, {} likely always-survivors",
                s.sace.mean, s.sace.lower, s.sace.upper, s.p, s.n_likely
            )
        }
        Command::Subgroups => {
            let r = cli::cmd_subgroups(&config)?;
            format!(
                "{} leaves, R^2 {:.3}, covariates {:?}",
                r.leaves.len(),
                r.r2,
                r.selected
            )
        }
        Command::Diagnose => {
            let d = cli::cmd_diagnose(&config)?;
            d.series
                .iter()
                .map(|s| format!("{}: rhat {:.3}, ess {:.0}", s.name, s.rhat, s.ess))
                .collect::<Vec<_>>()
                .join("\n")
        }
    };
    println!("{report}");
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
