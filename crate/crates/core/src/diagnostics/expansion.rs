//! Second-order local expansion of `J(ν) − J*` and `½‖g_ν‖²` in terms of the
//! local moments, and the empirical sharpness ratio.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::diagnostics::kernels::{compute_kernels, KernelReport};
use crate::diagnostics::moments::{assign_cells, local_moments, LocalMomentReport};
use crate::error::Result;
use crate::manifold::norm;
use crate::optimize::grad_norm_sq;
use crate::problem::{DiscreteMeasure, ProblemSpec};

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionReport {
    pub predicted_gap: f64,
    pub true_gap: f64,
    pub gap_residual: f64,
    /// `½‖g_ν‖²`.
    pub predicted_half_grad_sq: f64,
    pub true_half_grad_sq: f64,
    pub grad_residual: f64,
}

/// Evaluates both expansions from precomputed moment and kernel reports.
///
/// The gradient side uses the metric weights `diag(1/α, 1/β)` on the stacked
/// `(r, θ)` coordinates, `½ vᵀ D v` with `v = (K + H) b`, and
/// `½ Σ r_i² tr(Σ_i H_i²)/β`; both reduce to the unweighted forms at
/// `α = β = 1`.
pub fn expansion_from_reports(
    spec: &ProblemSpec,
    nu: &DiscreteMeasure,
    reference: &DiscreteMeasure,
    j_star: f64,
    moments: &LocalMomentReport,
    kernels: &KernelReport,
) -> Result<ExpansionReport> {
    let (alpha, beta) = (moments.alpha, moments.beta);
    let d = kernels.dim;
    let n = 1 + d;
    let b = DVector::from_vec(moments.b_vector());
    let kh: DMatrix<f64> = kernels.k_matrix() + kernels.h_matrix();
    let khb = &kh * &b;

    let mut local_gap = 0.0;
    let mut local_grad = 0.0;
    for (i, s) in moments.spikes.iter().enumerate() {
        let hi = kernels.h_block(i);
        let sigma = moments.sigma(i);
        local_gap += s.r_sq * (&sigma * &hi).trace();
        local_grad += s.r_sq * (&sigma * &hi * &hi).trace() / beta;
    }
    let weighted: f64 = khb
        .iter()
        .enumerate()
        .map(|(idx, v)| v * v / if idx % n == 0 { alpha } else { beta })
        .sum();

    let cells = assign_cells(nu, reference, moments.tau);
    let field_star = spec.field(reference)?;
    let field = spec.field(nu)?;
    let coord_len = nu.manifold().coord_len();
    let mut outer_gap = 0.0;
    let mut outer_grad = 0.0;
    for (a, cell) in nu.atoms().iter().zip(&cells) {
        if cell.is_none() {
            outer_gap += a.mass * field_star.value(a.pos.coords(), a.sign);
            let mut g = vec![0.0; coord_len];
            let v = field.value_grad(a.pos.coords(), a.sign, &mut g);
            outer_grad += a.mass * (4.0 * alpha * v * v + beta * norm(&g).powi(2));
        }
    }

    let predicted_gap = 0.5 * b.dot(&khb) + 0.5 * local_gap + outer_gap;
    let predicted_half_grad_sq = 0.5 * weighted + 0.5 * local_grad + 0.5 * outer_grad;
    let true_gap = spec.objective(nu)? - j_star;
    let true_half_grad_sq = 0.5 * grad_norm_sq(spec, nu, alpha, beta)?;
    Ok(ExpansionReport {
        predicted_gap,
        true_gap,
        gap_residual: (predicted_gap - true_gap).abs(),
        predicted_half_grad_sq,
        true_half_grad_sq,
        grad_residual: (predicted_half_grad_sq - true_half_grad_sq).abs(),
    })
}

pub fn expansion_residual(
    spec: &ProblemSpec,
    nu: &DiscreteMeasure,
    reference: &DiscreteMeasure,
    j_star: f64,
    tau: f64,
    alpha: f64,
    beta: f64,
) -> Result<ExpansionReport> {
    let moments = local_moments(nu, reference, tau, alpha, beta)?;
    let kernels = compute_kernels(spec, reference, alpha, beta)?;
    expansion_from_reports(spec, nu, reference, j_star, &moments, &kernels)
}

/// Gaps below this make the sharpness ratio undefined.
pub const SHARPNESS_GAP_FLOOR: f64 = 1e-14;

/// `½‖g_ν‖² / (J(ν) − J*)`, or `None` when the gap is below
/// [`SHARPNESS_GAP_FLOOR`].
pub fn sharpness_ratio(spec: &ProblemSpec, nu: &DiscreteMeasure, j_star: f64, alpha: f64, beta: f64) -> Result<Option<f64>> {
    let gap = spec.objective(nu)? - j_star;
    Ok(sharpness_from_parts(grad_norm_sq(spec, nu, alpha, beta)?, gap))
}

/// Sharpness ratio from a logged `‖g_ν‖²` and gap.
pub fn sharpness_from_parts(grad_norm_sq: f64, gap: f64) -> Option<f64> {
    (gap >= SHARPNESS_GAP_FLOOR).then(|| 0.5 * grad_norm_sq / gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Manifold;
    use crate::problem::{make_dirichlet_features, Atom};
    use std::sync::Arc;

    #[test]
    fn zero_at_the_minimizer() {
        let man = Manifold::torus(1);
        let teacher = DiscreteMeasure::new(
            man,
            vec![Atom::new(1.0, man.point(vec![1.0]).unwrap()), Atom::new(0.7, man.point(vec![4.0]).unwrap())],
        )
        .unwrap();
        let spec =
            ProblemSpec::new(Arc::new(make_dirichlet_features(1, 4).unwrap()), teacher.clone(), 0.0, false).unwrap();
        let rep = expansion_residual(&spec, &teacher, &teacher, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert!(rep.predicted_gap.abs() < 1e-10);
        assert!(rep.gap_residual < 1e-10);
        assert!(rep.grad_residual < 1e-10);
        assert_eq!(sharpness_ratio(&spec, &teacher, 0.0, 1.0, 1.0).unwrap(), None);
    }
}
