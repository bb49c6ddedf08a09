//! `compare`: mirror descent against ISTA on a fixed grid (`β = 0`).

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{rate_fit, RateFit, RateModel};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::io::{write_csv, write_json};
use crate::harness::oracle::{solve_oracle, OracleReport};
use crate::optimize::{ista_fixed_grid, mirror_fixed_grid, FixedGridOptions, Trajectory};
use crate::problem::{Atom, DiscreteMeasure, ProblemSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub iter: usize,
    pub gap_mirror: f64,
    pub gap_ista: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareSummary {
    pub j_star: f64,
    pub grid_size: usize,
    pub mirror_alpha: f64,
    pub ista_step: f64,
    pub iterations: usize,
    pub final_gap_mirror: f64,
    pub final_gap_ista: f64,
    pub mirror_monotone: bool,
    pub ista_monotone: bool,
    pub mirror_power_law: Option<RateFit>,
    pub ista_power_law: Option<RateFit>,
}

pub struct CompareOutcome {
    pub rows: Vec<CompareRow>,
    pub summary: CompareSummary,
}

/// Largest eigenvalue of the Gram matrix `k(θ_i, θ_j)` of the grid, the
/// Lipschitz constant of the smooth part in the masses.
pub fn gram_lipschitz(spec: &ProblemSpec, grid: &DiscreteMeasure) -> f64 {
    let atoms = grid.atoms();
    let k = spec.features();
    let gram = DMatrix::from_fn(atoms.len(), atoms.len(), |i, j| {
        atoms[i].sign.value() * atoms[j].sign.value() * k.kernel(atoms[i].pos.coords(), atoms[j].pos.coords())
    });
    gram.symmetric_eigenvalues().max()
}

/// Non-increasing objective up to rounding.
fn monotone(traj: &Trajectory) -> bool {
    traj.rows
        .windows(2)
        .all(|w| w[1].objective <= w[0].objective + 4.0 * f64::EPSILON * w[0].objective.abs())
}

pub fn execute_compare(cfg: &ExperimentConfig, oracle: Option<&OracleReport>) -> Result<CompareOutcome> {
    let spec = cfg.build_problem()?;
    let man = spec.manifold();
    let j_star = match (oracle, &cfg.diagnostics.oracle_path) {
        (Some(o), _) => o.j_star,
        (None, Some(path)) => OracleReport::load(path)?.j_star,
        (None, None) => solve_oracle(cfg)?.j_star,
    };
    let points = man.uniform_grid(cfg.init.m)?.points;
    let w = cfg.init.total_mass / points.len() as f64;
    let grid = DiscreteMeasure::new(man, points.into_iter().map(|p| Atom::new(w, p)).collect())?;

    let mirror_alpha = match cfg.compare.mirror_alpha {
        Some(a) => a,
        None => {
            // relative smoothness of ½‖Φw − y‖² w.r.t. the entropy is M·max k(θ, θ)
            let k_max = grid
                .atoms()
                .iter()
                .map(|a| spec.features().kernel(a.pos.coords(), a.pos.coords()))
                .fold(0.0, f64::max);
            let mass = cfg.init.total_mass.max(spec.teacher().total_mass());
            0.25 / (mass * k_max)
        }
    };
    let ista_step = match cfg.compare.ista_step {
        Some(s) => s,
        None => 1.0 / gram_lipschitz(&spec, &grid),
    };
    let iters = cfg.optimizer.iters;
    let run = |alpha: f64, ista: bool| {
        let mut opts = FixedGridOptions::new(alpha, iters);
        opts.j_star = Some(j_star);
        if ista {
            ista_fixed_grid(&spec, &grid, &opts)
        } else {
            mirror_fixed_grid(&spec, &grid, &opts)
        }
    };
    let (_, mirror) = run(mirror_alpha, false)?;
    let (_, ista) = run(ista_step, true)?;
    if mirror.is_empty() || ista.is_empty() {
        return Err(Error::Degenerate("empty trajectory".into()));
    }

    let rows: Vec<CompareRow> = mirror
        .rows
        .iter()
        .zip(&ista.rows)
        .map(|(a, b)| CompareRow {
            iter: a.iter,
            gap_mirror: a.objective - j_star,
            gap_ista: b.objective - j_star,
        })
        .collect();
    let window = cfg.compare.fit_window;
    let fit = |t: &Trajectory| {
        let gaps: Vec<(usize, f64)> = t.gaps().into_iter().filter(|(_, g)| *g > 0.0).collect();
        rate_fit(&gaps, window, RateModel::PowerLaw).ok()
    };
    let last = rows.last().expect("non-empty rows");
    let summary = CompareSummary {
        j_star,
        grid_size: grid.len(),
        mirror_alpha,
        ista_step,
        iterations: last.iter,
        final_gap_mirror: last.gap_mirror,
        final_gap_ista: last.gap_ista,
        mirror_monotone: monotone(&mirror),
        ista_monotone: monotone(&ista),
        mirror_power_law: fit(&mirror),
        ista_power_law: fit(&ista),
    };
    Ok(CompareOutcome { rows, summary })
}

/// Writes `compare.csv` and `compare_summary.json` into `out`.
pub fn cmd_compare(cfg: &ExperimentConfig, out: &Path) -> Result<CompareOutcome> {
    let outcome = execute_compare(cfg, None)?;
    write_csv(&out.join("compare.csv"), &outcome.rows)?;
    write_json(&out.join("compare_summary.json"), &outcome.summary)?;
    Ok(outcome)
}
