//! Config-driven experiment commands behind the `meopt` binary. Every
//! command has an `execute_*` form that returns its results in memory and a
//! `cmd_*` form that also writes them to an output directory.

pub mod compare;
pub mod config;
pub mod diagnose;
pub mod io;
pub mod oracle;
pub mod run;
pub mod sweep;

use std::path::Path;

pub use compare::{cmd_compare, execute_compare, gram_lipschitz, CompareOutcome, CompareRow, CompareSummary};
pub use config::{
    measure_from_records, records_from_measure, AtomRecord, CompareConfig, DiagnosticsConfig, ExperimentConfig,
    InitConfig, InitKind, OracleConfig, OutputConfig, ProblemConfig, ProblemKind, RandomTeacher, Reads, SweepAxes,
    SweepConfig,
};
pub use diagnose::{cmd_diagnose, execute_diagnose, DiagnosticsReport, PriorReport};
pub use io::{read_csv, trajectory_rows, write_csv, write_json, write_particles_csv, TrajectoryCsvRow};
pub use oracle::{merge_close, solve_oracle, OracleReport, MERGE_DIST, PRUNE_MASS};
pub use run::{cmd_run, execute_run, tail_rates, Checkpoint, Rates, RunOutcome, RunSummary};
pub use sweep::{cell_seed, cmd_sweep, execute_sweep, splitmix64, sweep_cells, SweepCell, SweepRow};

use crate::error::Result;

/// Solves the oracle and writes `oracle.json` into `out`.
pub fn cmd_oracle(cfg: &ExperimentConfig, out: &Path) -> Result<OracleReport> {
    let report = solve_oracle(cfg)?;
    write_json(&out.join("oracle.json"), &report)?;
    Ok(report)
}
