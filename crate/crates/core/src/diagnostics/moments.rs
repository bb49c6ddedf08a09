//! Local cells `Θ_i = {dist(θ, θ_i) < τ}` around the spikes of a reference
//! minimizer, and the local moments of a measure on them.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::cone::Sign;
use crate::diagnostics::JsonMatrix;
use crate::error::{invalid, Result};
use crate::manifold::INJECTIVITY_RADIUS;
use crate::problem::DiscreteMeasure;

/// Smallest distance between two reference spikes on the same copy of Θ
/// (`+∞` for fewer than two spikes).
pub fn min_separation(reference: &DiscreteMeasure) -> f64 {
    let man = reference.manifold();
    let atoms = reference.atoms();
    let mut best = f64::INFINITY;
    for (i, a) in atoms.iter().enumerate() {
        for b in &atoms[i + 1..] {
            if a.sign == b.sign {
                best = best.min(man.dist_coords(a.pos.coords(), b.pos.coords()));
            }
        }
    }
    best
}

/// Half the minimal spike separation, capped at 1.
pub fn default_tau(reference: &DiscreteMeasure) -> f64 {
    (0.5 * min_separation(reference)).min(1.0)
}

/// Checks that the cells are disjoint and inside the injectivity radius.
pub fn check_tau(reference: &DiscreteMeasure, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < INJECTIVITY_RADIUS) {
        return Err(invalid(format!(
            "tau = {tau} is not admissible: it must lie in (0, π); suggested maximum {}",
            default_tau(reference)
        )));
    }
    let sep = min_separation(reference);
    if sep < 2.0 * tau {
        return Err(invalid(format!(
            "tau = {tau} is not admissible: spikes are separated by {sep} < 2·tau; suggested maximum {}",
            0.5 * sep
        )));
    }
    Ok(())
}

/// Cell index (`Some(i)` for `Θ_i`, `None` for `Θ_0`) of every atom of `nu`.
/// Atoms only join cells of spikes with the same sign.
pub(crate) fn assign_cells(nu: &DiscreteMeasure, reference: &DiscreteMeasure, tau: f64) -> Vec<Option<usize>> {
    let man = nu.manifold();
    nu.atoms()
        .iter()
        .map(|a| {
            reference.atoms().iter().position(|s| {
                s.sign == a.sign && man.dist_coords(s.pos.coords(), a.pos.coords()) < tau
            })
        })
        .collect()
}

pub(crate) fn check_reference(nu: &DiscreteMeasure, reference: &DiscreteMeasure) -> Result<()> {
    if nu.manifold() != reference.manifold() {
        return Err(invalid("measure and reference live on different manifolds"));
    }
    if reference.atoms().iter().any(|a| !(a.mass > 0.0)) {
        return Err(invalid("reference minimizer has an atom with zero mass"));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct SpikeMoments {
    pub spike_pos: Vec<f64>,
    pub spike_sign: Sign,
    /// `r_i²`, the reference mass.
    pub r_sq: f64,
    /// `ν(Θ_i)`.
    pub bar_r_sq: f64,
    /// Local mean, as a point of Θ.
    pub bar_theta: Vec<f64>,
    /// `θ̄_i − θ_i` in normal coordinates at `θ_i`.
    pub delta_theta: Vec<f64>,
    pub b_r: f64,
    pub b_theta: Vec<f64>,
    #[serde(rename = "Sigma")]
    pub sigma: JsonMatrix,
    pub s: f64,
    /// Atoms of `ν` in the cell.
    pub atoms: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalMomentReport {
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub spikes: Vec<SpikeMoments>,
    pub bar_r0_sq: f64,
    pub total_mass: f64,
}

impl LocalMomentReport {
    /// `b` stacked as `(b_r, b_θ)` per spike.
    pub fn b_vector(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in &self.spikes {
            out.push(s.b_r);
            out.extend_from_slice(&s.b_theta);
        }
        out
    }

    pub fn sigma(&self, i: usize) -> DMatrix<f64> {
        self.spikes[i].sigma.to_dmatrix()
    }
}

pub fn local_moments(
    nu: &DiscreteMeasure,
    reference: &DiscreteMeasure,
    tau: f64,
    alpha: f64,
    beta: f64,
) -> Result<LocalMomentReport> {
    check_reference(nu, reference)?;
    check_tau(reference, tau)?;
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(invalid("local moments need alpha > 0 and beta > 0"));
    }
    let man = nu.manifold();
    let d = man.dim;
    let cells = assign_cells(nu, reference, tau);

    let mut bar_r0_sq = 0.0;
    let mut members: Vec<Vec<(f64, Vec<f64>)>> = vec![Vec::new(); reference.len()];
    for (a, cell) in nu.atoms().iter().zip(&cells) {
        match cell {
            Some(i) => {
                let x = man.normal_coords(&reference.atoms()[*i].pos, &a.pos)?;
                members[*i].push((a.mass, x));
            }
            None => bar_r0_sq += a.mass,
        }
    }

    let mut spikes = Vec::with_capacity(reference.len());
    for (spike, cell) in reference.atoms().iter().zip(&members) {
        let r_sq = spike.mass;
        let r = r_sq.sqrt();
        let bar_r_sq: f64 = cell.iter().map(|(w, _)| w).sum();
        let mut mean = vec![0.0; d];
        let mut cov = DMatrix::<f64>::zeros(d, d);
        if bar_r_sq > 0.0 {
            for (w, x) in cell {
                mean.iter_mut().zip(x).for_each(|(m, xi)| *m += w * xi);
            }
            mean.iter_mut().for_each(|m| *m /= bar_r_sq);
            for (w, x) in cell {
                for j in 0..d {
                    for k in 0..d {
                        cov[(j, k)] += w * (x[j] - mean[j]) * (x[k] - mean[k]);
                    }
                }
            }
            cov /= bar_r_sq * beta * beta;
        }
        let pos = spike.pos.coords();
        let bar_theta = man.exp_coords(pos, &man.from_frame(pos, &mean));
        let s = bar_r_sq.sqrt() * cov.trace().max(0.0).sqrt();
        spikes.push(SpikeMoments {
            spike_pos: pos.to_vec(),
            spike_sign: spike.sign,
            r_sq,
            bar_r_sq,
            bar_theta,
            b_r: (bar_r_sq - r_sq) / (2.0 * alpha * r),
            b_theta: mean.iter().map(|m| bar_r_sq / (beta * r) * m).collect(),
            delta_theta: mean,
            sigma: JsonMatrix::from(&cov),
            s,
            atoms: cell.len(),
        });
    }
    Ok(LocalMomentReport {
        tau,
        alpha,
        beta,
        spikes,
        bar_r0_sq,
        total_mass: nu.total_mass(),
    })
}
