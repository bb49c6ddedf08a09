//! `run`: one optimization from a config, with trajectory, summary and
//! checkpoint outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{check_tau, default_tau, rate_fit, RateFit, RateModel};
use crate::error::{Error, Result};
use crate::harness::config::{measure_from_records, records_from_measure, AtomRecord, ExperimentConfig};
use crate::harness::io::{trajectory_rows, write_csv, write_json, write_particles_csv, TrajectoryCsvRow};
use crate::harness::oracle::OracleReport;
use crate::manifold::ManifoldKind;
use crate::optimize::{run, ParticleEnsemble, RunOptions, Trajectory};
use crate::problem::{certify_optimality, Certificate, CertificateOptions, DiscreteMeasure};

#[derive(Clone, Debug, Serialize)]
pub struct Rates {
    /// Iteration window of the fits.
    pub window: (usize, usize),
    pub exponential: Option<RateFit>,
    pub power_law: Option<RateFit>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub iterations: usize,
    pub final_objective: f64,
    pub j_star: Option<f64>,
    pub final_gap: Option<f64>,
    pub final_grad_norm_sq: f64,
    pub total_halvings: u32,
    pub final_alpha: f64,
    pub final_beta: f64,
    pub total_mass: f64,
    /// `null` off the torus.
    pub certificate: Option<Certificate>,
    /// `null` without an oracle.
    pub rates: Option<Rates>,
    pub atoms: Vec<AtomRecord>,
}

/// Final measure of a run, read back by `diagnose`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iterations: usize,
    pub objective: f64,
    pub atoms: Vec<AtomRecord>,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub struct RunOutcome {
    pub summary: RunSummary,
    pub trajectory: Trajectory,
    pub ensemble: ParticleEnsemble,
    pub measure: DiscreteMeasure,
}

impl RunOutcome {
    pub fn csv_rows(&self) -> Vec<TrajectoryCsvRow> {
        trajectory_rows(&self.trajectory)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            iterations: self.summary.iterations,
            objective: self.summary.final_objective,
            atoms: self.summary.atoms.clone(),
        }
    }
}

/// Exponential and power-law fits over the last `fraction` of the logged
/// iterations; non-positive gaps (below floating-point resolution) are skipped.
pub fn tail_rates(traj: &Trajectory, fraction: f64) -> Option<Rates> {
    let last = traj.last()?.iter;
    let start = last - ((last as f64) * fraction).floor() as usize;
    let window = (start.max(1), last);
    let gaps: Vec<(usize, f64)> = traj.gaps().into_iter().filter(|(_, g)| *g > 0.0).collect();
    if gaps.is_empty() {
        return None;
    }
    Some(Rates {
        window,
        exponential: rate_fit(&gaps, window, RateModel::Exponential).ok(),
        power_law: rate_fit(&gaps, window, RateModel::PowerLaw).ok(),
    })
}

/// Runs the optimizer without writing anything. `oracle` overrides
/// `diagnostics.oracle_path`.
pub fn execute_run(cfg: &ExperimentConfig, oracle: Option<&OracleReport>) -> Result<RunOutcome> {
    let spec = cfg.build_problem()?;
    let init = cfg.build_init()?;
    let loaded = match (oracle, &cfg.diagnostics.oracle_path) {
        (None, Some(path)) => Some(OracleReport::load(path)?),
        _ => None,
    };
    let oracle = oracle.or(loaded.as_ref());
    let reference = oracle.map(|o| o.measure(spec.manifold())).transpose()?;
    let tau = match (&reference, cfg.diagnostics.tau) {
        (Some(r), Some(t)) => {
            check_tau(r, t)?;
            Some(t)
        }
        (Some(r), None) if !r.is_empty() => Some(default_tau(r)),
        _ => None,
    };
    let probe = cfg.probe_points()?;
    let opts = RunOptions {
        probe: &probe,
        j_star: oracle.map(|o| o.j_star),
        w2_reference: reference.as_ref().zip(tau),
        timing: cfg.diagnostics.timing,
        snapshot_every: cfg.output.particle_stride,
    };
    let (ensemble, trajectory) = run(&spec, init, &cfg.optimizer, &opts)?;
    let measure = ensemble.project();
    let certificate = if spec.manifold().kind == ManifoldKind::Torus {
        Some(certify_optimality(
            &spec,
            &measure,
            &CertificateOptions {
                grid_per_axis: cfg.certificate_grid_per_axis(),
                tol: cfg.diagnostics.certificate_tol,
                mass_tol: None,
            },
        )?)
    } else {
        None
    };
    let last = trajectory.last().expect("run logs at least one row");
    let summary = RunSummary {
        iterations: last.iter,
        final_objective: last.objective,
        j_star: opts.j_star,
        final_gap: last.gap,
        final_grad_norm_sq: last.grad_norm_sq,
        total_halvings: trajectory.rows.iter().map(|r| r.halvings).sum(),
        final_alpha: last.alpha,
        final_beta: last.beta,
        total_mass: measure.total_mass(),
        certificate,
        rates: tail_rates(&trajectory, cfg.diagnostics.rate_tail_fraction),
        atoms: records_from_measure(&measure),
    };
    Ok(RunOutcome {
        summary,
        trajectory,
        ensemble,
        measure,
    })
}

/// Writes `trajectory.csv`, `summary.json` and `checkpoint.json` into `out`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let outcome = execute_run(cfg, None)?;
    write_csv(&out.join("trajectory.csv"), &outcome.csv_rows())?;
    write_json(&out.join("summary.json"), &outcome.summary)?;
    write_json(&out.join("checkpoint.json"), &outcome.checkpoint())?;
    if cfg.output.particle_stride.is_some() {
        write_particles_csv(&out.join("particles.csv"), &outcome.trajectory.snapshots)?;
    }
    Ok(outcome)
}

/// Reads the atoms of a checkpoint as a measure on the config's manifold.
pub fn checkpoint_measure(cfg: &ExperimentConfig, checkpoint: &Checkpoint) -> Result<DiscreteMeasure> {
    measure_from_records(cfg.manifold(), &checkpoint.atoms)
}
