//! Square-loss problems `J(ν) = ½‖∫φ dν − f*‖² + λ ν(Θ)` and their first
//! variation `J'_ν(θ) = <φ(θ), f_ν − f*> + λ`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::cone::Sign;
use crate::error::{invalid, Error, Result};
use crate::manifold::{Manifold, Point, TangentVector};
use crate::problem::features::{FeatureModel, ScalarFeatures};
use crate::problem::measure::DiscreteMeasure;

#[derive(Clone)]
pub struct ProblemSpec {
    features: Arc<dyn FeatureModel>,
    teacher: DiscreteMeasure,
    target: Vec<f64>,
    target_from_teacher: bool,
    lambda: f64,
    signed: bool,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("features", &self.features)
            .field("teacher_atoms", &self.teacher.len())
            .field("lambda", &self.lambda)
            .field("signed", &self.signed)
            .finish()
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

impl ProblemSpec {
    /// Teacher–student problem with `f* = Σ s_b m_b φ(θ*_b)`.
    pub fn new(features: Arc<dyn FeatureModel>, teacher: DiscreteMeasure, lambda: f64, signed: bool) -> Result<Self> {
        check_lambda(lambda)?;
        if teacher.manifold() != features.manifold() {
            return Err(invalid("teacher atoms do not lie on the features' manifold"));
        }
        let target = embed_with(features.as_ref(), &teacher);
        Ok(Self {
            features,
            teacher,
            target,
            target_from_teacher: true,
            lambda,
            signed,
        })
    }

    /// Problem with an explicit target vector `f* ∈ F` and no teacher.
    pub fn from_target(features: Arc<dyn FeatureModel>, target: Vec<f64>, lambda: f64, signed: bool) -> Result<Self> {
        check_lambda(lambda)?;
        if target.len() != features.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: features.feature_dim(),
                found: target.len(),
            });
        }
        let teacher = DiscreteMeasure::empty(features.manifold());
        Ok(Self {
            features,
            teacher,
            target,
            target_from_teacher: false,
            lambda,
            signed,
        })
    }

    pub fn features(&self) -> &dyn FeatureModel {
        self.features.as_ref()
    }

    pub fn features_arc(&self) -> Arc<dyn FeatureModel> {
        Arc::clone(&self.features)
    }

    pub fn manifold(&self) -> Manifold {
        self.features.manifold()
    }

    pub fn teacher(&self) -> &DiscreteMeasure {
        &self.teacher
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn signed(&self) -> bool {
        self.signed
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            lambda,
            ..self.clone()
        })
    }

    /// The doubled problem on `Θ⁺ ⊔ Θ⁻`: student atoms carry a sign tag and
    /// `φ` is negated on the minus copy.
    pub fn lift_signed(&self) -> Self {
        Self {
            signed: true,
            ..self.clone()
        }
    }

    fn check_measure(&self, nu: &DiscreteMeasure) -> Result<()> {
        if nu.manifold() != self.manifold() {
            return Err(invalid("measure and problem live on different manifolds"));
        }
        if !self.signed && nu.has_negative() {
            return Err(invalid("negative atoms in an unsigned problem"));
        }
        Ok(())
    }

    /// `f_ν = Σ s_a m_a φ(θ_a)`.
    pub fn embed(&self, nu: &DiscreteMeasure) -> Result<Vec<f64>> {
        self.check_measure(nu)?;
        Ok(embed_with(self.features(), nu))
    }

    /// `f_ν − f*`.
    pub fn residual(&self, nu: &DiscreteMeasure) -> Result<Vec<f64>> {
        let mut f = self.embed(nu)?;
        f.iter_mut().zip(&self.target).for_each(|(x, t)| *x -= t);
        Ok(f)
    }

    pub fn objective(&self, nu: &DiscreteMeasure) -> Result<f64> {
        let res = self.residual(nu)?;
        Ok(objective_from_residual(&res, nu.total_mass(), self.lambda))
    }

    /// The objective through the kernel double sum over the atoms of `ν` and
    /// (negatively weighted) teacher atoms.
    pub fn objective_kernel_expansion(&self, nu: &DiscreteMeasure) -> Result<f64> {
        self.check_measure(nu)?;
        if !self.target_from_teacher {
            return Err(Error::Unsupported("kernel expansion needs a teacher-defined target".into()));
        }
        let terms: Vec<(f64, &[f64])> = nu
            .atoms()
            .iter()
            .map(|a| (a.weight(), a.pos.coords()))
            .chain(self.teacher.atoms().iter().map(|a| (-a.weight(), a.pos.coords())))
            .collect();
        let k = self.features();
        let mut quad = 0.0;
        for (wa, pa) in &terms {
            for (wb, pb) in &terms {
                quad += wa * wb * k.kernel(pa, pb);
            }
        }
        Ok(0.5 * quad + self.lambda * nu.total_mass())
    }

    /// Snapshot of `J'_ν` for repeated evaluation.
    pub fn field(&self, nu: &DiscreteMeasure) -> Result<FirstVariation<'_>> {
        let residual = self.residual(nu)?;
        Ok(self.field_from_residual(residual))
    }

    pub fn field_from_residual(&self, residual: Vec<f64>) -> FirstVariation<'_> {
        FirstVariation { spec: self, residual }
    }

    fn check_point(&self, theta: &Point) -> Result<()> {
        let m = self.manifold();
        if theta.coords().len() != m.coord_len() {
            return Err(Error::DimensionMismatch {
                expected: m.coord_len(),
                found: theta.coords().len(),
            });
        }
        Ok(())
    }

    pub fn first_variation(&self, nu: &DiscreteMeasure, theta: &Point) -> Result<f64> {
        self.first_variation_signed(nu, theta, Sign::Plus)
    }

    /// `J'_ν` on the copy of Θ selected by `sign`.
    pub fn first_variation_signed(&self, nu: &DiscreteMeasure, theta: &Point, sign: Sign) -> Result<f64> {
        self.check_point(theta)?;
        Ok(self.field(nu)?.value(theta.coords(), sign))
    }

    pub fn grad_first_variation(&self, nu: &DiscreteMeasure, theta: &Point) -> Result<TangentVector> {
        self.check_point(theta)?;
        let field = self.field(nu)?;
        let mut g = vec![0.0; self.manifold().coord_len()];
        field.value_grad(theta.coords(), Sign::Plus, &mut g);
        Ok(TangentVector {
            base: theta.clone(),
            delta: g,
        })
    }

    /// Riemannian Hessian of `J'_ν` at `θ` in normal coordinates (tangent frame).
    pub fn hess_first_variation(&self, nu: &DiscreteMeasure, theta: &Point) -> Result<DMatrix<f64>> {
        self.check_point(theta)?;
        Ok(self.field(nu)?.hess(theta.coords(), Sign::Plus).2)
    }

    /// Objective of a signed measure given as `(weight, position)` pairs:
    /// coincident atoms are merged first, so the penalty is the total
    /// variation `λ|ν|(Θ)` of the Jordan decomposition.
    pub fn signed_objective(&self, atoms: &[(f64, Point)]) -> Result<f64> {
        let m = self.manifold();
        let mut merged: BTreeMap<Vec<u64>, (f64, &Point)> = BTreeMap::new();
        for (w, p) in atoms {
            if !m.contains(p) {
                return Err(invalid("signed atom not on the problem's manifold"));
            }
            let key = p.coords().iter().map(|x| x.to_bits()).collect();
            merged.entry(key).or_insert((0.0, p)).0 += w;
        }
        let k = self.features();
        let mut f = vec![0.0; k.feature_dim()];
        let mut phi = vec![0.0; k.feature_dim()];
        let mut tv = 0.0;
        for (w, p) in merged.values() {
            k.eval(p.coords(), &mut phi);
            f.iter_mut().zip(&phi).for_each(|(x, y)| *x += w * y);
            tv += w.abs();
        }
        f.iter_mut().zip(&self.target).for_each(|(x, t)| *x -= t);
        Ok(objective_from_residual(&f, tv, self.lambda))
    }
}

pub(crate) fn embed_with(features: &dyn FeatureModel, nu: &DiscreteMeasure) -> Vec<f64> {
    let mut f = vec![0.0; features.feature_dim()];
    let mut phi = vec![0.0; features.feature_dim()];
    for a in nu.atoms() {
        features.eval(a.pos.coords(), &mut phi);
        let w = a.weight();
        f.iter_mut().zip(&phi).for_each(|(x, y)| *x += w * y);
    }
    f
}

pub(crate) fn objective_from_residual(res: &[f64], mass: f64, lambda: f64) -> f64 {
    0.5 * res.iter().map(|x| x * x).sum::<f64>() + lambda * mass
}

/// `J'_ν` frozen at a residual `f_ν − f*`.
#[derive(Clone, Debug)]
pub struct FirstVariation<'a> {
    spec: &'a ProblemSpec,
    residual: Vec<f64>,
}

impl FirstVariation<'_> {
    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn value(&self, theta: &[f64], sign: Sign) -> f64 {
        sign.value() * self.spec.features().pair(theta, &self.residual) + self.spec.lambda
    }

    /// Value and Riemannian gradient (stored coordinates, written to `grad`).
    pub fn value_grad(&self, theta: &[f64], sign: Sign, grad: &mut [f64]) -> f64 {
        let s = sign.value();
        let v = self.spec.features().pair_grad(theta, &self.residual, grad);
        if sign == Sign::Minus {
            grad.iter_mut().for_each(|g| *g = -*g);
        }
        s * v + self.spec.lambda
    }

    /// Value, gradient (stored coordinates) and Hessian (tangent frame).
    pub fn hess(&self, theta: &[f64], sign: Sign) -> (f64, Vec<f64>, DMatrix<f64>) {
        let s = sign.value();
        let (v, g, h) = self.spec.features().pair_hess(theta, &self.residual);
        (
            s * v + self.spec.lambda,
            g.into_iter().map(|x| s * x).collect(),
            h * s,
        )
    }
}

/// `½(2 + ∫φ dν)² + λ ν(Θ)` for a scalar `φ`.
pub fn generic_objective(phi: &ScalarFeatures, lambda: f64, nu: &DiscreteMeasure) -> f64 {
    let integral: f64 = nu.atoms().iter().map(|a| a.weight() * phi.value(a.pos.coords()[0]).0).sum();
    0.5 * (2.0 + integral).powi(2) + lambda * nu.total_mass()
}

/// Optimal total mass `max{0, (−2φ* − λ)/φ*²}` of the scalar problem.
pub fn generic_optimal_mass(phi_star: f64, lambda: f64) -> f64 {
    if phi_star >= 0.0 {
        return 0.0;
    }
    ((-2.0 * phi_star - lambda) / (phi_star * phi_star)).max(0.0)
}

/// The scalar problem as a square-loss problem with target `f* = −2`.
pub fn generic_scalar_problem(phi: ScalarFeatures, lambda: f64) -> Result<ProblemSpec> {
    ProblemSpec::from_target(Arc::new(phi), vec![-2.0], lambda, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::features::{make_dirichlet_features, make_scalar_features, ScalarFunction, ScalarSource};
    use crate::problem::measure::Atom;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn spike_problem(n_f: usize, theta: f64, lambda: f64) -> ProblemSpec {
        let m = Manifold::torus(1);
        let teacher = DiscreteMeasure::new(m, vec![Atom::new(1.0, m.point(vec![theta]).unwrap())]).unwrap();
        ProblemSpec::new(Arc::new(make_dirichlet_features(1, n_f).unwrap()), teacher, lambda, false).unwrap()
    }

    fn p1(x: f64) -> Point {
        Manifold::torus(1).point(vec![x]).unwrap()
    }

    #[test]
    fn objective_examples() {
        let spec = spike_problem(1, 1.0, 0.3);
        let empty = DiscreteMeasure::empty(Manifold::torus(1));
        assert!((spec.with_lambda(0.0).unwrap().objective(&empty).unwrap() - 1.5).abs() < 1e-14);
        assert_eq!(spec.objective(spec.teacher()).unwrap(), 0.3);
        let kexp = spec.objective_kernel_expansion(&empty).unwrap();
        assert!((kexp - 1.5).abs() < 1e-14);
    }

    #[test]
    fn first_variation_examples() {
        let theta = 0.7;
        let spec = spike_problem(1, theta, 0.1);
        let empty = DiscreteMeasure::empty(Manifold::torus(1));
        assert!((spec.first_variation(&empty, &p1(theta)).unwrap() + 2.9).abs() < 1e-14);
        assert!((spec.first_variation(&empty, &p1(theta + TAU / 3.0)).unwrap() - 0.1).abs() < 1e-14);
        let at_teacher = spec.field(spec.teacher()).unwrap();
        for x in [0.0, 1.0, 4.0] {
            assert_eq!(at_teacher.value(&[x], Sign::Plus), 0.1);
            let mut g = [1.0];
            at_teacher.value_grad(&[x], Sign::Plus, &mut g);
            assert_eq!(g[0], 0.0);
        }
    }

    #[test]
    fn gradient_matches_dirichlet_derivative() {
        let spec = spike_problem(3, 2.0, 0.0);
        let m = Manifold::torus(1);
        let nu = DiscreteMeasure::new(m, vec![Atom::new(0.6, p1(1.1))]).unwrap();
        let x = 0.4;
        let dn = |u: f64| -> f64 { (1..=3).map(|k| -2.0 * k as f64 * (k as f64 * u).sin()).sum() };
        let want = 0.6 * dn(x - 1.1) - dn(x - 2.0);
        let g = spec.grad_first_variation(&nu, &p1(x)).unwrap();
        assert!((g.delta[0] - want).abs() < 1e-12);
    }

    #[test]
    fn local_minimum_has_zero_gradient() {
        let spec = spike_problem(2, 2.0, 0.1);
        let empty = DiscreteMeasure::empty(Manifold::torus(1));
        let field = spec.field(&empty).unwrap();
        let mut x = 2.05;
        for _ in 0..50 {
            let (_, g, h) = field.hess(&[x], Sign::Plus);
            x -= g[0] / h[(0, 0)];
        }
        let mut g = [0.0];
        field.value_grad(&[x], Sign::Plus, &mut g);
        assert!(g[0].abs() < 1e-8);
        assert!((x - 2.0).abs() < 1e-10);
    }

    #[test]
    fn manifold_and_sign_mismatches() {
        let spec = spike_problem(1, 0.0, 0.0);
        let other = DiscreteMeasure::empty(Manifold::torus(2));
        assert!(spec.objective(&other).is_err());
        let neg = DiscreteMeasure::new(Manifold::torus(1), vec![Atom::signed(1.0, p1(0.0), Sign::Minus)]).unwrap();
        assert!(spec.objective(&neg).is_err());
        assert!(spec.lift_signed().objective(&neg).is_ok());
    }

    fn mixed_teacher() -> DiscreteMeasure {
        let m = Manifold::torus(1);
        DiscreteMeasure::new(
            m,
            vec![
                Atom::signed(1.0, p1(0.5), Sign::Plus),
                Atom::signed(0.8, p1(2.5), Sign::Minus),
                Atom::signed(1.2, p1(4.5), Sign::Plus),
            ],
        )
        .unwrap()
    }

    #[test]
    fn signed_teacher_is_reproduced() {
        let f = Arc::new(make_dirichlet_features(1, 4).unwrap());
        let spec = ProblemSpec::new(f, mixed_teacher(), 0.2, true).unwrap();
        let j = spec.objective(spec.teacher()).unwrap();
        assert!((j - 0.2 * 3.0).abs() < 1e-15);
    }

    #[test]
    fn coincident_opposite_atoms_cancel_in_f_but_not_in_penalty() {
        let spec = spike_problem(2, 1.0, 0.5).lift_signed();
        let m = Manifold::torus(1);
        let nu = DiscreteMeasure::new(
            m,
            vec![
                Atom::signed(1.0, p1(3.0), Sign::Plus),
                Atom::signed(1.0, p1(3.0), Sign::Minus),
            ],
        )
        .unwrap();
        let empty = DiscreteMeasure::empty(m);
        let j_empty = spec.objective(&empty).unwrap();
        let j = spec.objective(&nu).unwrap();
        assert!((j - (j_empty + 0.5 * 2.0)).abs() < 1e-12);
        let direct = spec.signed_objective(&[(1.0, p1(3.0)), (-1.0, p1(3.0))]).unwrap();
        assert!((direct - j_empty).abs() < 1e-12);
    }

    #[test]
    fn generic_problem_examples() {
        let phi = make_scalar_features(ScalarSource::Closed(ScalarFunction::Cos)).unwrap();
        let m = Manifold::torus(1);
        assert_eq!(generic_objective(&phi, 0.5, &DiscreteMeasure::empty(m)), 2.0);
        assert!((generic_optimal_mass(-1.0, 0.5) - 1.5).abs() < 1e-15);
        assert_eq!(generic_optimal_mass(-1.0, 2.0), 0.0);
        assert_eq!(generic_optimal_mass(-1.0, 3.0), 0.0);
        let f = -1.5;
        assert!((f * f + 2.0 * f + 0.5 * 1.5f64).abs() < 1e-15);

        let spec = generic_scalar_problem(phi.clone(), 0.5).unwrap();
        let nu = DiscreteMeasure::new(m, vec![Atom::new(1.5, p1(PI)), Atom::new(0.2, p1(1.0))]).unwrap();
        let a = spec.objective(&nu).unwrap();
        let b = generic_objective(&phi, 0.5, &nu);
        assert!((a - b).abs() < 1e-14);
    }

    fn random_measure(rng: &mut ChaCha8Rng, m: Manifold, n: usize, signed: bool) -> DiscreteMeasure {
        let atoms = (0..n)
            .map(|_| {
                let s = if signed && rng.random_bool(0.5) { Sign::Minus } else { Sign::Plus };
                Atom::signed(rng.random_range(0.0..1.0), m.sample_uniform(rng), s)
            })
            .collect();
        DiscreteMeasure::new(m, atoms).unwrap()
    }

    #[test]
    fn kernel_expansion_matches_feature_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for d in 1..=2 {
            let m = Manifold::torus(d);
            let teacher = random_measure(&mut rng, m, 3, true);
            let spec = ProblemSpec::new(Arc::new(make_dirichlet_features(d, 3).unwrap()), teacher, 0.1, true).unwrap();
            for _ in 0..20 {
                let nu = random_measure(&mut rng, m, 5, true);
                let a = spec.objective(&nu).unwrap();
                let b = spec.objective_kernel_expansion(&nu).unwrap();
                assert!((a - b).abs() < 1e-10 * a.max(1.0));
            }
        }
    }

    #[test]
    fn doubled_objective_equals_signed_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = Manifold::torus(1);
        let spec = ProblemSpec::new(Arc::new(make_dirichlet_features(1, 3).unwrap()), mixed_teacher(), 0.3, true).unwrap();
        for _ in 0..100 {
            let nu = random_measure(&mut rng, m, 6, true);
            let pairs: Vec<(f64, Point)> = nu.atoms().iter().map(|a| (a.weight(), a.pos.clone())).collect();
            let a = spec.objective(&nu).unwrap();
            let b = spec.signed_objective(&pairs).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn mass_mixing_is_convex(
            w0 in proptest::collection::vec(0.0..2.0f64, 4),
            w1 in proptest::collection::vec(0.0..2.0f64, 4),
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Manifold::torus(2);
            let teacher = random_measure(&mut rng, m, 2, false);
            let spec = ProblemSpec::new(Arc::new(make_dirichlet_features(2, 2).unwrap()), teacher, 0.2, false).unwrap();
            let pos: Vec<Point> = (0..4).map(|_| m.sample_uniform(&mut rng)).collect();
            let build = |w: &[f64]| DiscreteMeasure::new(m, w.iter().zip(&pos).map(|(x, p)| Atom::new(*x, p.clone())).collect()).unwrap();
            let mid: Vec<f64> = w0.iter().zip(&w1).map(|(a, b)| 0.5 * (a + b)).collect();
            let j0 = spec.objective(&build(&w0)).unwrap();
            let j1 = spec.objective(&build(&w1)).unwrap();
            let jm = spec.objective(&build(&mid)).unwrap();
            prop_assert!(jm <= 0.5 * (j0 + j1) + 1e-12);
        }
    }
}
