//! `diagnose`: local-theory quantities of a checkpoint against the oracle.

use std::path::Path;

use serde::Serialize;

use crate::diagnostics::{
    check_tau, compute_kernels, cone_w2_upper, default_tau, expansion_from_reports, local_moments,
    mirror_rate_bound, mirror_rate_bound_simplified, prior_quality, sharpness_ratio, ExpansionReport, KernelReport,
    LocalMomentReport,
};
use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::io::write_json;
use crate::harness::oracle::OracleReport;
use crate::harness::run::{checkpoint_measure, Checkpoint};

#[derive(Clone, Debug, Serialize)]
pub struct PriorReport {
    /// Uniform prior with mass `init.total_mass`.
    pub rho_mass: f64,
    pub prior_quality: f64,
    pub mirror_rate_tau: f64,
    pub mirror_rate_bound: f64,
    pub mirror_rate_bound_simplified: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticsReport {
    pub j_star: f64,
    pub objective: f64,
    pub tau: f64,
    pub local_moments: LocalMomentReport,
    pub kernels: KernelReport,
    pub expansion: ExpansionReport,
    /// `null` when the gap is below the floor.
    pub sharpness_ratio: Option<f64>,
    pub cone_w2_upper: f64,
    pub prior: PriorReport,
}

pub fn execute_diagnose(
    cfg: &ExperimentConfig,
    checkpoint: &Checkpoint,
    oracle: &OracleReport,
) -> Result<DiagnosticsReport> {
    let spec = cfg.build_problem()?;
    let man = spec.manifold();
    let nu = checkpoint_measure(cfg, checkpoint)?;
    let reference = oracle.measure(man)?;
    let tau = match cfg.diagnostics.tau {
        Some(t) => t,
        None => default_tau(&reference),
    };
    check_tau(&reference, tau)?;
    let (alpha, beta) = (cfg.optimizer.alpha, cfg.optimizer.beta);
    let moments = local_moments(&nu, &reference, tau, alpha, beta)?;
    let kernels = compute_kernels(&spec, &reference, alpha, beta)?;
    let expansion = expansion_from_reports(&spec, &nu, &reference, oracle.j_star, &moments, &kernels)?;

    let rho_mass = cfg.init.total_mass;
    let density = rho_mass / man.volume();
    let h = prior_quality(&reference, |_| density, rho_mass)?;
    let d = &cfg.diagnostics;
    let ref_mass = reference.total_mass();
    let prior = PriorReport {
        rho_mass,
        prior_quality: h,
        mirror_rate_tau: d.mirror_rate_tau,
        mirror_rate_bound: mirror_rate_bound(h, ref_mass, man.dim, d.prior_log_lipschitz, d.c_theta, d.mirror_rate_tau)?,
        mirror_rate_bound_simplified: mirror_rate_bound_simplified(h, ref_mass, man.dim, d.c_theta, d.mirror_rate_tau)?,
    };
    Ok(DiagnosticsReport {
        j_star: oracle.j_star,
        objective: spec.objective(&nu)?,
        tau,
        sharpness_ratio: sharpness_ratio(&spec, &nu, oracle.j_star, alpha, beta)?,
        cone_w2_upper: cone_w2_upper(&nu, &reference, tau)?,
        local_moments: moments,
        kernels,
        expansion,
        prior,
    })
}

/// Writes `diagnostics.json` into `out`.
pub fn cmd_diagnose(
    cfg: &ExperimentConfig,
    checkpoint: &Checkpoint,
    oracle: &OracleReport,
    out: &Path,
) -> Result<DiagnosticsReport> {
    let report = execute_diagnose(cfg, checkpoint, oracle)?;
    write_json(&out.join("diagnostics.json"), &report)?;
    Ok(report)
}
