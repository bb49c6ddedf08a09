//! `sweep`: the run command over a grid of `(m, β/α, λ)` and repeats.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{require_exact_kernel, ExperimentConfig, SweepConfig};
use crate::harness::io::write_csv;
use crate::harness::oracle::{solve_oracle, OracleReport};
use crate::harness::run::execute_run;

/// The splitmix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of one sweep cell: the base seed folded with the cell's axis values
/// and the repeat index, `s ← splitmix64(s ⊕ v)` for `v` in
/// `(m, bits(β/α), bits(λ), repeat)`. The seed depends only on the cell
/// itself, so adding axis values never changes other cells' seeds.
pub fn cell_seed(base_seed: u64, m: usize, beta_over_alpha: f64, lambda: f64, repeat: usize) -> u64 {
    [m as u64, beta_over_alpha.to_bits(), lambda.to_bits(), repeat as u64]
        .into_iter()
        .fold(splitmix64(base_seed), |s, v| splitmix64(s ^ v))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub beta_over_alpha: f64,
    pub lambda: f64,
    pub repeat: usize,
    /// `J_final − J*`; NaN when the cell failed.
    pub final_excess: f64,
    pub success: bool,
}

#[derive(Clone, Debug)]
pub struct SweepCell {
    pub m: usize,
    pub beta_over_alpha: f64,
    pub lambda: f64,
    pub repeat: usize,
    pub seed: u64,
}

impl SweepCell {
    pub fn config(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone().with_seed(self.seed);
        cfg.init.m = self.m;
        cfg.optimizer.beta = cfg.optimizer.alpha * self.beta_over_alpha;
        cfg.problem.lambda = self.lambda;
        cfg.diagnostics.oracle_path = None;
        cfg
    }
}

/// Cells in output order: `m`, then `β/α`, then `λ`, then repeat.
pub fn sweep_cells(cfg: &SweepConfig) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for m in cfg.m_values() {
        for ratio in cfg.ratio_values() {
            for lambda in cfg.lambda_values() {
                for repeat in 0..cfg.repeats {
                    cells.push(SweepCell {
                        m,
                        beta_over_alpha: ratio,
                        lambda,
                        repeat,
                        seed: cell_seed(cfg.base_seed, m, ratio, lambda, repeat),
                    });
                }
            }
        }
    }
    cells
}

/// `J*` per λ: the oracle for exact-kernel problems, 0 otherwise (the
/// excess is then the final objective).
fn reference_objectives(cfg: &SweepConfig) -> Result<BTreeMap<u64, f64>> {
    let mut out = BTreeMap::new();
    for lambda in cfg.lambda_values() {
        let mut base = cfg.base.clone();
        base.problem.lambda = lambda;
        let j_star = match (&cfg.base.diagnostics.oracle_path, require_exact_kernel(&base)) {
            (Some(path), _) if cfg.lambda_values().len() == 1 => OracleReport::load(path)?.j_star,
            (_, Ok(())) => solve_oracle(&base)?.j_star,
            (_, Err(_)) => 0.0,
        };
        out.insert(lambda.to_bits(), j_star);
    }
    Ok(out)
}

/// Runs all cells on a pool of `jobs` threads (`None`: the global pool).
/// Rows come back in cell order whatever the scheduling.
pub fn execute_sweep(cfg: &SweepConfig, jobs: Option<usize>) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let j_star = reference_objectives(cfg)?;
    let cells = sweep_cells(cfg);
    let work = || {
        cells
            .par_iter()
            .map(|cell| {
                let excess = execute_run(&cell.config(&cfg.base), None)
                    .map(|o| o.summary.final_objective - j_star[&cell.lambda.to_bits()])
                    .unwrap_or(f64::NAN);
                SweepRow {
                    m: cell.m,
                    beta_over_alpha: cell.beta_over_alpha,
                    lambda: cell.lambda,
                    repeat: cell.repeat,
                    final_excess: excess,
                    success: excess <= cfg.success_threshold,
                }
            })
            .collect::<Vec<_>>()
    };
    match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

/// Writes `matrix.csv` into `out`.
pub fn cmd_sweep(cfg: &SweepConfig, out: &Path, jobs: Option<usize>) -> Result<Vec<SweepRow>> {
    let rows = execute_sweep(cfg, jobs)?;
    write_csv(&out.join("matrix.csv"), &rows)?;
    Ok(rows)
}
