//! Global kernel `K` and local kernels `H_i` at a reference minimizer.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::diagnostics::moments::check_reference;
use crate::diagnostics::JsonMatrix;
use crate::error::{invalid, Result};
use crate::problem::{DiscreteMeasure, ProblemSpec};

#[derive(Clone, Debug, Serialize)]
pub struct KernelReport {
    pub alpha: f64,
    pub beta: f64,
    /// Intrinsic dimension; block size is `1 + d`.
    pub dim: usize,
    #[serde(rename = "K")]
    pub k: JsonMatrix,
    #[serde(rename = "H")]
    pub h: JsonMatrix,
    pub sigma_min_k: f64,
    /// `min_i σ_min(H_i)`.
    pub sigma_min_h: f64,
    pub sigma_min_h_blocks: Vec<f64>,
}

impl KernelReport {
    pub fn k_matrix(&self) -> DMatrix<f64> {
        self.k.to_dmatrix()
    }

    pub fn h_matrix(&self) -> DMatrix<f64> {
        self.h.to_dmatrix()
    }

    /// `H_i` (the position block of spike `i`).
    pub fn h_block(&self, i: usize) -> DMatrix<f64> {
        let n = 1 + self.dim;
        self.h_matrix().view((i * n + 1, i * n + 1), (self.dim, self.dim)).into_owned()
    }
}

fn sigma_min(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().min()
}

/// `K_{(i,j),(i',j')} = <r_i ∇̄_j φ(θ_i), r_i' ∇̄_j' φ(θ_i')>` with
/// `∇̄φ = (2αφ, β∇φ)` (frame coordinates) and `H_i = β² ∇²J'_{ν*}(θ_i)`.
pub fn compute_kernels(spec: &ProblemSpec, reference: &DiscreteMeasure, alpha: f64, beta: f64) -> Result<KernelReport> {
    check_reference(reference, reference)?;
    if reference.manifold() != spec.manifold() {
        return Err(invalid("reference lives on a different manifold than the problem"));
    }
    if !(alpha > 0.0 && beta >= 0.0) {
        return Err(invalid("kernels need alpha > 0 and beta >= 0"));
    }
    let man = spec.manifold();
    let d = man.dim;
    let n = 1 + d;
    let atoms = reference.atoms();
    let size = atoms.len() * n;
    let feats = spec.features();
    let mut k = DMatrix::<f64>::zeros(size, size);
    for (i, a) in atoms.iter().enumerate() {
        let (pa, ra) = (a.pos.coords(), a.mass.sqrt());
        for (i2, b) in atoms.iter().enumerate() {
            let (pb, rb) = (b.pos.coords(), b.mass.sqrt());
            let c = ra * rb * a.sign.value() * b.sign.value();
            k[(i * n, i2 * n)] = c * 4.0 * alpha * alpha * feats.kernel(pa, pb);
            // d/dθ_b of k(θ_a, θ_b) = grad1_kernel(θ_b, θ_a)
            let gb = man.to_frame(pb, &feats.grad1_kernel(pb, pa));
            for j in 0..d {
                k[(i * n, i2 * n + 1 + j)] = c * 2.0 * alpha * beta * gb[j];
            }
            let ga = man.to_frame(pa, &feats.grad1_kernel(pa, pb));
            for j in 0..d {
                k[(i * n + 1 + j, i2 * n)] = c * 2.0 * alpha * beta * ga[j];
            }
            let cross = feats.cross_kernel(pa, pb);
            for j in 0..d {
                for j2 in 0..d {
                    k[(i * n + 1 + j, i2 * n + 1 + j2)] = c * beta * beta * cross[(j, j2)];
                }
            }
        }
    }

    let field = spec.field(reference)?;
    let mut h = DMatrix::<f64>::zeros(size, size);
    let mut blocks = Vec::with_capacity(atoms.len());
    for (i, a) in atoms.iter().enumerate() {
        let hi = field.hess(a.pos.coords(), a.sign).2 * (beta * beta);
        let hi = (&hi + hi.transpose()) * 0.5;
        blocks.push(sigma_min(&hi));
        h.view_mut((i * n + 1, i * n + 1), (d, d)).copy_from(&hi);
    }
    Ok(KernelReport {
        alpha,
        beta,
        dim: d,
        sigma_min_k: sigma_min(&k),
        sigma_min_h: blocks.iter().copied().fold(f64::INFINITY, f64::min),
        sigma_min_h_blocks: blocks,
        k: JsonMatrix::from(&k),
        h: JsonMatrix::from(&h),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Manifold;
    use crate::problem::{make_dirichlet_features, Atom};
    use std::sync::Arc;

    #[test]
    fn single_spike_dirichlet_entries() {
        let man = Manifold::torus(1);
        let teacher = DiscreteMeasure::new(man, vec![Atom::new(1.0, man.point(vec![0.7]).unwrap())]).unwrap();
        let spec = ProblemSpec::new(Arc::new(make_dirichlet_features(1, 1).unwrap()), teacher.clone(), 0.0, false)
            .unwrap();
        let rep = compute_kernels(&spec, &teacher, 1.0, 1.0).unwrap();
        let k = rep.k_matrix();
        assert!((k[(0, 0)] - 12.0).abs() < 1e-12);
        assert!(k[(0, 1)].abs() < 1e-12);
        assert!((k[(1, 1)] - 2.0).abs() < 1e-12);
        assert!(rep.sigma_min_k > 0.0);
    }

    #[test]
    fn zero_mass_reference_is_rejected() {
        let man = Manifold::torus(1);
        let r = DiscreteMeasure::new(man, vec![Atom::new(0.0, man.point(vec![0.7]).unwrap())]).unwrap();
        let spec =
            ProblemSpec::from_target(Arc::new(make_dirichlet_features(1, 1).unwrap()), vec![0.0; 3], 0.1, false)
                .unwrap();
        assert!(compute_kernels(&spec, &r, 1.0, 1.0).is_err());
    }
}
