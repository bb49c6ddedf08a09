//! Convex fixed-grid baselines: multiplicative mirror descent on the masses
//! (`h(r) = r²`, `β = 0`) and ISTA (`h(r) = r`, `β = 0`).

use crate::error::{invalid, Result};
use crate::optimize::trajectory::{Trajectory, TrajectoryRow};
use crate::problem::spec::objective_from_residual;
use crate::problem::{Atom, DiscreteMeasure, ProblemSpec};

#[derive(Clone, Debug)]
pub struct FixedGridOptions {
    pub alpha: f64,
    pub iters: usize,
    /// Stop once `Σ w_i 4α J'(θ_i)² ≤ stop_tol` (mirror) or the squared
    /// proximal step over `α` is (ISTA).
    pub stop_tol: f64,
    pub j_star: Option<f64>,
}

impl FixedGridOptions {
    pub fn new(alpha: f64, iters: usize) -> Self {
        Self {
            alpha,
            iters,
            stop_tol: 0.0,
            j_star: None,
        }
    }
}

#[derive(Clone, Copy)]
enum Update {
    Mirror,
    Ista,
}

fn fixed_grid(
    spec: &ProblemSpec,
    grid: &DiscreteMeasure,
    opts: &FixedGridOptions,
    update: Update,
) -> Result<(DiscreteMeasure, Trajectory)> {
    if !(opts.alpha > 0.0 && opts.alpha.is_finite()) {
        return Err(invalid("fixed-grid step size must be positive"));
    }
    // validates manifold and signs
    spec.embed(grid)?;
    let k = spec.features();
    let dim = k.feature_dim();
    let phis: Vec<Vec<f64>> = grid
        .atoms()
        .iter()
        .map(|a| {
            let mut out = vec![0.0; dim];
            k.eval(a.pos.coords(), &mut out);
            out
        })
        .collect();
    let signs: Vec<f64> = grid.atoms().iter().map(|a| a.sign.value()).collect();
    let mut w: Vec<f64> = grid.atoms().iter().map(|a| a.mass).collect();
    let lambda = spec.lambda();

    let residual_of = |w: &[f64]| {
        let mut res: Vec<f64> = spec.target().iter().map(|t| -t).collect();
        for ((phi, s), wi) in phis.iter().zip(&signs).zip(w) {
            let c = s * wi;
            if c != 0.0 {
                res.iter_mut().zip(phi).for_each(|(r, x)| *r += c * x);
            }
        }
        res
    };

    let mut traj = Trajectory::default();
    let mut res = residual_of(&w);
    let mut objective = objective_from_residual(&res, w.iter().sum(), lambda);
    for iter in 0..=opts.iters {
        let jp: Vec<f64> = phis
            .iter()
            .zip(&signs)
            .map(|(phi, s)| s * phi.iter().zip(&res).map(|(a, b)| a * b).sum::<f64>() + lambda)
            .collect();
        let g2: f64 = w.iter().zip(&jp).map(|(wi, v)| wi * 4.0 * opts.alpha * v * v).sum();
        let mut row = TrajectoryRow {
            iter,
            objective,
            gap: opts.j_star.map(|j| objective - j),
            grad_norm_sq: g2,
            min_first_variation: None,
            w2hat: None,
            wall_ms: None,
            alpha: opts.alpha,
            beta: 0.0,
            delta_objective: None,
            halvings: 0,
        };
        // ISTA can revive atoms at zero mass, so it stops on the proximal
        // step length instead
        let stationarity = match update {
            Update::Mirror => g2,
            Update::Ista => w
                .iter()
                .zip(&jp)
                .map(|(wi, v)| (wi - (wi - opts.alpha * v).max(0.0)).powi(2) / opts.alpha)
                .sum(),
        };
        if iter == opts.iters || stationarity <= opts.stop_tol {
            traj.push(row);
            break;
        }
        for (wi, v) in w.iter_mut().zip(&jp) {
            *wi = match update {
                // flushing subnormals keeps long runs from slowing to a crawl
                Update::Mirror => Some(*wi * (-4.0 * opts.alpha * v).exp()).filter(|w| w.is_normal()).unwrap_or(0.0),
                Update::Ista => (*wi - opts.alpha * v).max(0.0),
            };
        }
        res = residual_of(&w);
        let next = objective_from_residual(&res, w.iter().sum(), lambda);
        row.delta_objective = Some(next - objective);
        traj.push(row);
        objective = next;
    }
    let atoms = grid
        .atoms()
        .iter()
        .zip(&w)
        .map(|(a, wi)| Atom::signed(*wi, a.pos.clone(), a.sign))
        .collect();
    Ok((DiscreteMeasure::new(grid.manifold(), atoms)?, traj))
}

/// `w_i ← w_i · exp(−4α J'_ν(θ_i))` on fixed atom locations.
pub fn mirror_fixed_grid(
    spec: &ProblemSpec,
    grid: &DiscreteMeasure,
    opts: &FixedGridOptions,
) -> Result<(DiscreteMeasure, Trajectory)> {
    fixed_grid(spec, grid, opts, Update::Mirror)
}

/// `r_i ← max(0, r_i − α J'_ν(θ_i))` on fixed atom locations (masses `r_i`).
pub fn ista_fixed_grid(
    spec: &ProblemSpec,
    grid: &DiscreteMeasure,
    opts: &FixedGridOptions,
) -> Result<(DiscreteMeasure, Trajectory)> {
    fixed_grid(spec, grid, opts, Update::Ista)
}
