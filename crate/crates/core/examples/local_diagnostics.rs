//! Local structure at the minimizer: kernels, local moments of a perturbed
//! measure, the second-order expansion and the sharpness ratio.

use meopt::diagnostics::{compute_kernels, default_tau, expansion_residual, local_moments, sharpness_ratio};
use meopt::harness::{solve_oracle, ExperimentConfig};
use meopt::problem::{Atom, DiscreteMeasure};

fn main() -> meopt::error::Result<()> {
    let cfg = ExperimentConfig::default();
    let spec = cfg.build_problem()?;
    let oracle = solve_oracle(&cfg)?;
    let reference = oracle.measure(spec.manifold())?;
    let (alpha, beta) = (0.01, 0.01);

    let kernels = compute_kernels(&spec, &reference, alpha, beta)?;
    println!("sigma_min(K) = {:.3e}, sigma_min(H) = {:.3e}", kernels.sigma_min_k, kernels.sigma_min_h);

    let tau = default_tau(&reference);
    let man = spec.manifold();
    for eps in [1e-2, 5e-3, 2.5e-3] {
        // split every spike into two half-mass atoms at ±eps
        let mut atoms = Vec::new();
        for a in reference.atoms() {
            for s in [-1.0, 1.0] {
                let x = a.pos.coords()[0] + s * eps;
                atoms.push(Atom::new(0.5 * a.mass * (1.0 + eps), man.point(vec![x])?));
            }
        }
        let nu = DiscreteMeasure::new(man, atoms)?;
        let m = local_moments(&nu, &reference, tau, alpha, beta)?;
        let e = expansion_residual(&spec, &nu, &reference, oracle.j_star, tau, alpha, beta)?;
        let kappa = sharpness_ratio(&spec, &nu, oracle.j_star, alpha, beta)?;
        println!(
            "eps {eps:.1e}: s_1 = {:.2e}, gap {:.3e}, residual {:.2e}, sharpness {:?}",
            m.spikes[0].s, e.true_gap, e.gap_residual, kappa
        );
    }
    Ok(())
}
