//! Global optimality certificate: `J'_ν ≥ 0` on Θ and `J'_ν = 0` on the
//! support of `ν`, checked on a grid scan plus the atoms of `ν`.

use rayon::prelude::*;
use serde::Serialize;

use crate::cone::Sign;
use crate::error::{invalid, Result};
use crate::problem::features::require_torus;
use crate::problem::measure::DiscreteMeasure;
use crate::problem::spec::ProblemSpec;

/// Default scan density: 50 points per unit length.
pub fn default_grid_per_axis() -> usize {
    (50.0 * std::f64::consts::TAU).ceil() as usize
}

#[derive(Clone, Debug)]
pub struct CertificateOptions {
    pub grid_per_axis: usize,
    pub tol: f64,
    /// Atoms with mass above this are treated as part of the support.
    /// `None` means `1e-6 · ν(Θ)`.
    pub mass_tol: Option<f64>,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            grid_per_axis: default_grid_per_axis(),
            tol: 1e-5,
            mass_tol: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AtomValue {
    pub pos: Vec<f64>,
    pub sign: Sign,
    pub mass: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub pass: bool,
    pub tol: f64,
    pub mass_tol: f64,
    pub grid_points: usize,
    pub grid_min: f64,
    pub grid_argmin: Vec<f64>,
    pub grid_argmin_sign: Sign,
    pub atom_values: Vec<AtomValue>,
    pub max_atom_abs: f64,
    /// Location (and copy) of the largest violation of either condition.
    pub most_violating: Vec<f64>,
    pub most_violating_sign: Sign,
    pub worst_violation: f64,
}

pub fn certify_optimality(spec: &ProblemSpec, nu: &DiscreteMeasure, opts: &CertificateOptions) -> Result<Certificate> {
    let man = spec.manifold();
    require_torus(&man, "the optimality certificate")?;
    if opts.grid_per_axis < 1 || !(opts.tol >= 0.0) {
        return Err(invalid("certificate needs grid_per_axis >= 1 and tol >= 0"));
    }
    let field = spec.field(nu)?;
    let mass_tol = opts.mass_tol.unwrap_or(1e-6 * nu.total_mass());

    let grid = man.uniform_grid(opts.grid_per_axis.pow(man.dim as u32))?;
    let mut probes: Vec<&[f64]> = grid.points.iter().map(|p| p.coords()).collect();
    probes.extend(nu.atoms().iter().map(|a| a.pos.coords()));
    let signs: &[Sign] = if spec.signed() { &[Sign::Plus, Sign::Minus] } else { &[Sign::Plus] };

    let values: Vec<(f64, usize, Sign)> = probes
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, p)| signs.iter().map(move |&s| (i, p, s)))
        .map(|(i, p, s)| (field.value(p, s), i, s))
        .collect();
    let (grid_min, imin, smin) = values
        .iter()
        .copied()
        .fold((f64::INFINITY, 0, Sign::Plus), |acc, v| if v.0 < acc.0 { v } else { acc });

    let atom_values: Vec<AtomValue> = nu
        .atoms()
        .iter()
        .filter(|a| a.mass > mass_tol)
        .map(|a| AtomValue {
            pos: a.pos.coords().to_vec(),
            sign: a.sign,
            mass: a.mass,
            value: field.value(a.pos.coords(), a.sign),
        })
        .collect();
    let worst_atom = atom_values
        .iter()
        .max_by(|a, b| a.value.abs().total_cmp(&b.value.abs()));
    let max_atom_abs = worst_atom.map_or(0.0, |a| a.value.abs());

    let neg_violation = (-grid_min).max(0.0);
    let (most_violating, most_violating_sign, worst_violation) = match worst_atom {
        Some(a) if a.value.abs() > neg_violation => (a.pos.clone(), a.sign, a.value.abs()),
        _ => (probes[imin].to_vec(), smin, neg_violation),
    };

    Ok(Certificate {
        pass: grid_min >= -opts.tol && max_atom_abs <= opts.tol,
        tol: opts.tol,
        mass_tol,
        grid_points: grid.points.len(),
        grid_min,
        grid_argmin: probes[imin].to_vec(),
        grid_argmin_sign: smin,
        atom_values,
        max_atom_abs,
        most_violating,
        most_violating_sign,
        worst_violation,
    })
}
