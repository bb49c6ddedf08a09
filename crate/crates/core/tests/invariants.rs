use std::sync::Arc;

use meopt::diagnostics::{compute_kernels, local_moments, sharpness_ratio};
use meopt::manifold::Manifold;
use meopt::problem::{make_dirichlet_features, Atom, DiscreteMeasure, ProblemSpec};
use proptest::prelude::*;

fn torus_measure(atoms: &[(f64, f64)]) -> DiscreteMeasure {
    let man = Manifold::torus(1);
    DiscreteMeasure::new(man, atoms.iter().map(|&(w, x)| Atom::new(w, man.point(vec![x]).unwrap())).collect()).unwrap()
}

fn reference() -> DiscreteMeasure {
    torus_measure(&[(0.8, 1.0), (0.5, 3.0), (0.7, 5.0)])
}

fn spec(n_f: usize) -> ProblemSpec {
    ProblemSpec::new(Arc::new(make_dirichlet_features(1, n_f).unwrap()), reference(), 0.1, false).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moments_conserve_mass(atoms in proptest::collection::vec((0.0f64..1.0, 0.0f64..6.0), 1..30), tau in 0.05f64..1.0) {
        let nu = torus_measure(&atoms);
        let rep = local_moments(&nu, &reference(), tau, 0.01, 0.02).unwrap();
        let total: f64 = rep.spikes.iter().map(|s| s.bar_r_sq).sum::<f64>() + rep.bar_r0_sq;
        prop_assert!((total - nu.total_mass()).abs() <= 1e-12 * (1.0 + nu.total_mass()));
        for s in &rep.spikes {
            prop_assert!(s.sigma.data.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn sharpness_ignores_atom_order(atoms in proptest::collection::vec((0.01f64..1.0, 0.0f64..6.0), 2..12), seed in any::<u64>()) {
        let spec = spec(4);
        let nu = torus_measure(&atoms);
        let mut shuffled = atoms.clone();
        let n = shuffled.len();
        shuffled.swap(0, (seed as usize) % n);
        shuffled.reverse();
        let a = sharpness_ratio(&spec, &nu, 0.0, 0.01, 0.02).unwrap();
        let b = sharpness_ratio(&spec, &torus_measure(&shuffled), 0.0, 0.01, 0.02).unwrap();
        match (a, b) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0)),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn kernels_match_finite_differences(alpha in 0.001f64..0.1, beta in 0.001f64..0.1, n_f in 1usize..6) {
        let spec = spec(n_f);
        let r = reference();
        let rep = compute_kernels(&spec, &r, alpha, beta).unwrap();
        let k = rep.k_matrix();
        let feats = spec.features();
        let h = 1e-4;
        let kern = |a: f64, b: f64| feats.kernel(&[a], &[b]);
        for (i, a) in r.atoms().iter().enumerate() {
            let (xa, ra) = (a.pos.coords()[0], a.mass.sqrt());
            for (j, b) in r.atoms().iter().enumerate() {
                let (xb, rb) = (b.pos.coords()[0], b.mass.sqrt());
                let mass = 4.0 * alpha * alpha * ra * rb * kern(xa, xb);
                prop_assert!((k[(2 * i, 2 * j)] - mass).abs() <= 1e-12 * (1.0 + mass.abs()));
                let mixed = (kern(xa + h, xb + h) - kern(xa + h, xb - h) - kern(xa - h, xb + h) + kern(xa - h, xb - h))
                    / (4.0 * h * h);
                let pos = beta * beta * ra * rb * mixed;
                prop_assert!((k[(2 * i + 1, 2 * j + 1)] - pos).abs() <= 1e-5 * (1.0 + pos.abs()) * beta * beta);
                let side = 2.0 * alpha * beta * ra * rb * (kern(xa, xb + h) - kern(xa, xb - h)) / (2.0 * h);
                prop_assert!((k[(2 * i, 2 * j + 1)] - side).abs() <= 1e-6 * (1.0 + side.abs()) * alpha * beta);
            }
            let jp = |x: f64| spec.first_variation(&r, &r.manifold().point(vec![x]).unwrap()).unwrap();
            let fd = beta * beta * (jp(xa + h) - 2.0 * jp(xa) + jp(xa - h)) / (h * h);
            let hi = rep.h_block(i)[(0, 0)];
            prop_assert!((hi - fd).abs() <= 1e-5 * (1.0 + fd.abs()) * beta * beta, "{} vs {}", hi, fd);
        }
    }
}
