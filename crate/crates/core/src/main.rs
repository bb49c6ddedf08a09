use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use meopt::error::{Error, Result};
use meopt::harness::{
    cmd_compare, cmd_diagnose, cmd_oracle, cmd_run, cmd_sweep, Checkpoint, ExperimentConfig, OracleReport, Reads,
    SweepConfig,
};

/// Conic particle gradient descent experiments.
///
/// Each command reads a JSON config; every field is optional and falls back
/// to the defaults listed below. Outputs go to `--out` (or `output.dir`).
/// `MEOPT_THREADS` caps the worker threads.
#[derive(Parser)]
#[command(name = "meopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (sweep cells run concurrently up to this limit).
    #[arg(long)]
    jobs: Option<usize>,
    /// Seed override: init and optimizer seeds, or the sweep base seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimizer: trajectory.csv, summary.json, checkpoint.json.
    Run(Common),
    /// Fine-grid convex solve for the reference minimizer: oracle.json.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Grid size (overrides `oracle.grid_size`).
        #[arg(long)]
        grid_size: Option<usize>,
        /// Stationarity tolerance on the grid (overrides `oracle.tol`).
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Sweep over m, beta/alpha and lambda: matrix.csv. Takes a sweep config
    /// `{base, axes: {m, beta_over_alpha, lambda}, repeats, success_threshold, base_seed}`.
    Sweep(Common),
    /// Mirror descent against ISTA on a fixed grid: compare.csv.
    Compare(Common),
    /// Local diagnostics of a checkpoint against the oracle: diagnostics.json.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Checkpoint (overrides `diagnostics.checkpoint_path`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Oracle output (overrides `diagnostics.oracle_path`).
        #[arg(long)]
        oracle: Option<PathBuf>,
    },
}

fn thread_cap() -> Option<usize> {
    std::env::var("MEOPT_THREADS").ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

fn load(common: &Common, oracle: bool, checkpoint: bool) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load_reading(&common.config, Reads { oracle, checkpoint })?;
    if let Some(s) = common.seed {
        cfg = cfg.with_seed(s);
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, out))
}

fn missing(what: &str) -> Error {
    Error::Config(format!("no {what} given (flag or diagnostics config)"))
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run(common) => {
            let (cfg, out) = load(&common, true, false)?;
            let outcome = cmd_run(&cfg, &out)?;
            let pass = outcome.summary.certificate.as_ref().is_none_or(|c| c.pass);
            println!(
                "J = {:.12e} after {} iterations, certificate {}",
                outcome.summary.final_objective,
                outcome.summary.iterations,
                match &outcome.summary.certificate {
                    Some(c) if c.pass => "pass",
                    Some(_) => "FAIL",
                    None => "n/a",
                }
            );
            Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Oracle { common, grid_size, tol } => {
            let (mut cfg, out) = load(&common, false, false)?;
            if let Some(g) = grid_size {
                cfg.oracle.grid_size = g;
            }
            if let Some(t) = tol {
                cfg.oracle.tol = t;
            }
            let report = cmd_oracle(&cfg, &out)?;
            println!("J* = {:.15e} with {} atoms", report.j_star, report.atoms.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep(common) => {
            let mut cfg = SweepConfig::load(&common.config)?;
            if let Some(s) = common.seed {
                cfg.base_seed = s;
            }
            let out = common.out.clone().unwrap_or_else(|| cfg.base.output.dir.clone());
            let jobs = match (common.jobs, thread_cap()) {
                (Some(j), Some(c)) => Some(j.min(c)),
                (j, c) => j.or(c),
            };
            let rows = cmd_sweep(&cfg, &out, jobs)?;
            let ok = rows.iter().filter(|r| r.success).count();
            println!("{} cells, {ok} successful", rows.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare(common) => {
            let (cfg, out) = load(&common, true, false)?;
            let outcome = cmd_compare(&cfg, &out)?;
            println!(
                "gap at k = {}: mirror {:.3e}, ista {:.3e}",
                outcome.summary.iterations, outcome.summary.final_gap_mirror, outcome.summary.final_gap_ista
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Diagnose {
            common,
            checkpoint,
            oracle,
        } => {
            let (cfg, out) = load(&common, oracle.is_none(), checkpoint.is_none())?;
            let cp = checkpoint
                .or_else(|| cfg.diagnostics.checkpoint_path.clone())
                .ok_or_else(|| missing("checkpoint"))?;
            let op = oracle
                .or_else(|| cfg.diagnostics.oracle_path.clone())
                .ok_or_else(|| missing("oracle"))?;
            let report = cmd_diagnose(&cfg, &Checkpoint::load(&cp)?, &OracleReport::load(&op)?, &out)?;
            println!(
                "gap {:.3e}, expansion residual {:.3e}",
                report.expansion.true_gap, report.expansion.gap_residual
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let defaults = serde_json::to_string_pretty(&ExperimentConfig::default()).expect("default config serializes");
    let matches = Cli::command()
        .after_long_help(format!("Default config (run, oracle, compare, diagnose):\n{defaults}"))
        .get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let jobs = match &cli.command {
        Command::Run(c) | Command::Sweep(c) | Command::Compare(c) => c.jobs,
        Command::Oracle { common, .. } | Command::Diagnose { common, .. } => common.jobs,
    };
    if let Some(n) = thread_cap().or(jobs) {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("meopt: {e}");
            ExitCode::from(1)
        }
    }
}
