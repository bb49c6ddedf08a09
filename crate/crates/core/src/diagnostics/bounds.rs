//! Prior quality `H̄(ν*, ρ)` and the closed-form upper bound on the mirror
//! rate function.

use crate::error::{invalid, Result};
use crate::manifold::Point;
use crate::problem::DiscreteMeasure;

/// `H̄(ν*, ρ) = Σ r_i² log(r_i²/ρ(θ_i)) − ν*(Θ) + ρ(Θ)`.
pub fn prior_quality(reference: &DiscreteMeasure, rho_density: impl Fn(&Point) -> f64, rho_mass: f64) -> Result<f64> {
    let mut h = rho_mass - reference.total_mass();
    for a in reference.atoms() {
        let rho = rho_density(&a.pos);
        if !(rho > 0.0) {
            return Err(invalid(format!("prior density must be positive at spikes, got {rho}")));
        }
        if a.mass > 0.0 {
            h += a.mass * (a.mass / rho).ln();
        }
    }
    Ok(h)
}

/// `(H̄ + ν*(Θ)·d·(C_Θ + log τ + L/τ)) / τ`, where `H̄` already contains
/// `ρ(Θ) − ν*(Θ)`.
pub fn mirror_rate_bound(prior_quality: f64, nu_star_mass: f64, dim: usize, lipschitz: f64, c_theta: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok((prior_quality + nu_star_mass * dim as f64 * (c_theta + tau.ln() + lipschitz / tau)) / tau)
}

/// `(H̄ + ν*(Θ)·d·(log τ + C_Θ)) / τ`, the form without the `L/τ` term.
pub fn mirror_rate_bound_simplified(prior_quality: f64, nu_star_mass: f64, dim: usize, c_theta: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok((prior_quality + nu_star_mass * dim as f64 * (tau.ln() + c_theta)) / tau)
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid(format!("tau must be positive, got {tau}")));
    }
    Ok(())
}
