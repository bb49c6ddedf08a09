//! The cone `Ω = R₊ × Θ`: particles `(r, θ)`, the cone distance and the
//! cone-compatible retractions (canonical, mirror, induced).
//!
//! A particle carries mass `r²`. Points with `r = 0` are all identified with
//! the apex; every retraction leaves an apex particle where it is.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{norm, wrapped_diff, Manifold, ManifoldKind, Point};

/// Sign tag for the signed (doubled) formulation. Ignored by cone geometry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Sign {
    #[default]
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl TryFrom<i8> for Sign {
    type Error = String;
    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            _ => Err(format!("sign must be 1 or -1, got {v}")),
        }
    }
}

impl From<Sign> for i8 {
    fn from(s: Sign) -> i8 {
        match s {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConeParticle {
    pub r: f64,
    pub pos: Point,
    pub sign: Sign,
}

impl ConeParticle {
    pub fn new(r: f64, pos: Point) -> Result<Self> {
        Self::with_sign(r, pos, Sign::Plus)
    }

    pub fn with_sign(r: f64, pos: Point, sign: Sign) -> Result<Self> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::InvalidInput(format!("cone radius must be finite and >= 0, got {r}")));
        }
        Ok(Self { r, pos, sign })
    }

    pub fn is_apex(&self) -> bool {
        self.r == 0.0
    }

    pub fn mass(&self) -> f64 {
        self.r * self.r
    }
}

/// Tangent vector `(δr, δθ)` at a particle; `dpos` is in the stored
/// coordinates of the particle's position.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeTangent {
    pub dr: f64,
    pub dpos: Vec<f64>,
}

impl ConeTangent {
    pub fn zero(manifold: &Manifold) -> Self {
        Self {
            dr: 0.0,
            dpos: vec![0.0; manifold.coord_len()],
        }
    }
}

/// Cone distance in the `α = β = 1` normalization:
/// `d² = r₁² + r₂² − 2 r₁ r₂ cos(min(dist(θ₁, θ₂), π))`.
pub fn cone_dist(manifold: &Manifold, p: &ConeParticle, q: &ConeParticle) -> f64 {
    cone_dist_raw(manifold, p.r, p.pos.coords(), q.r, q.pos.coords())
}

pub(crate) fn cone_dist_raw(manifold: &Manifold, r1: f64, a: &[f64], r2: f64, b: &[f64]) -> f64 {
    cone_dist_sq_raw(manifold, r1, a, r2, b).sqrt()
}

pub(crate) fn cone_dist_sq_raw(manifold: &Manifold, r1: f64, a: &[f64], r2: f64, b: &[f64]) -> f64 {
    if r1 == 0.0 || r2 == 0.0 {
        return r1 * r1 + r2 * r2;
    }
    let angle = manifold.dist_coords(a, b).min(std::f64::consts::PI);
    // (r1 - r2)² + 2 r1 r2 (1 - cos) avoids cancellation near the diagonal
    let half = 0.5 * angle;
    ((r1 - r2).powi(2) + 4.0 * (r1 * r2) * half.sin().powi(2)).max(0.0)
}

/// A retraction on the cone.
pub trait ConeRetraction: Send + Sync {
    fn name(&self) -> &'static str;

    /// Retraction on raw coordinates; returns `(r', θ')`.
    fn retract_raw(
        &self,
        manifold: &Manifold,
        r: f64,
        pos: &[f64],
        dr: f64,
        dpos: &[f64],
    ) -> Result<(f64, Vec<f64>)>;

    fn retract(&self, manifold: &Manifold, p: &ConeParticle, t: &ConeTangent) -> Result<ConeParticle> {
        if t.dpos.len() != manifold.coord_len() {
            return Err(Error::DimensionMismatch {
                expected: manifold.coord_len(),
                found: t.dpos.len(),
            });
        }
        let (r, pos) = self.retract_raw(manifold, p.r, p.pos.coords(), t.dr, &t.dpos)?;
        Ok(ConeParticle {
            r,
            pos: Point::from_raw(pos),
            sign: p.sign,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetractionKind {
    Canonical,
    #[default]
    Mirror,
    Induced,
}

impl RetractionKind {
    pub const ALL: [RetractionKind; 3] = [
        RetractionKind::Canonical,
        RetractionKind::Mirror,
        RetractionKind::Induced,
    ];

    pub fn supports(self, manifold: &Manifold) -> bool {
        self != RetractionKind::Induced || manifold.kind == ManifoldKind::Sphere
    }
}

impl ConeRetraction for RetractionKind {
    fn name(&self) -> &'static str {
        match self {
            RetractionKind::Canonical => "canonical",
            RetractionKind::Mirror => "mirror",
            RetractionKind::Induced => "induced",
        }
    }

    fn retract_raw(
        &self,
        manifold: &Manifold,
        r: f64,
        pos: &[f64],
        dr: f64,
        dpos: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        if !self.supports(manifold) {
            return Err(Error::UnsupportedRetraction {
                retraction: self.name(),
            });
        }
        if r == 0.0 {
            return Ok((0.0, pos.to_vec()));
        }
        match self {
            RetractionKind::Canonical => {
                if dr.abs() >= r {
                    return Err(Error::StepTooLarge { ratio: dr.abs() / r });
                }
                Ok((r + dr, manifold.retract_coords(pos, dpos)))
            }
            RetractionKind::Mirror => Ok((r * (dr / r).exp(), manifold.retract_coords(pos, dpos))),
            RetractionKind::Induced => {
                let u: Vec<f64> = pos
                    .iter()
                    .zip(dpos)
                    .map(|(t, d)| r * t + t * dr + r * d)
                    .collect();
                let nu = norm(&u);
                if !(nu > 0.0) {
                    return Err(Error::Degenerate("induced retraction step reaches the origin".into()));
                }
                Ok((nu, u.into_iter().map(|x| x / nu).collect()))
            }
        }
    }
}

pub fn retract_canonical(manifold: &Manifold, p: &ConeParticle, t: &ConeTangent) -> Result<ConeParticle> {
    RetractionKind::Canonical.retract(manifold, p, t)
}

pub fn retract_mirror(manifold: &Manifold, p: &ConeParticle, t: &ConeTangent) -> Result<ConeParticle> {
    RetractionKind::Mirror.retract(manifold, p, t)
}

pub fn retract_induced(manifold: &Manifold, p: &ConeParticle, t: &ConeTangent) -> Result<ConeParticle> {
    RetractionKind::Induced.retract(manifold, p, t)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomCheck {
    pub pass: bool,
    pub worst_deviation: f64,
    pub tolerance: f64,
}

impl AxiomCheck {
    fn new(tolerance: f64) -> Self {
        Self {
            pass: true,
            worst_deviation: 0.0,
            tolerance,
        }
    }

    fn record(&mut self, dev: f64) {
        let dev = if dev.is_nan() { f64::INFINITY } else { dev };
        self.worst_deviation = self.worst_deviation.max(dev);
        self.pass = self.worst_deviation <= self.tolerance;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub retraction: String,
    pub samples: usize,
    /// Axiom (i): `Ret_p(0) = p` and `dRet_p(0) = id`.
    pub retraction_property: AxiomCheck,
    /// Axiom (ii): apex particles stay at the apex.
    pub zero_preserving: AxiomCheck,
    /// Axiom (iii): `r̃ r₁ = r r₂` and `θ₁ = θ₂`, as relative deviation.
    pub homogeneity: AxiomCheck,
}

impl CompatibilityReport {
    pub fn pass(&self) -> bool {
        self.retraction_property.pass && self.zero_preserving.pass && self.homogeneity.pass
    }
}

const FD_STEP: f64 = 1e-4;
const FD_TOL: f64 = 1e-6;
const HOMOGENEITY_TOL: f64 = 1e-12;
/// Sampled steps satisfy `|δr|/r ≤ 0.9` and `‖δθ‖ ≤ 0.9`, inside `C = 1`.
const SAMPLE_STEP_BOUND: f64 = 0.9;

fn sample_tangent<R: Rng + ?Sized>(manifold: &Manifold, pos: &[f64], rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..manifold.coord_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut v = manifold.project_tangent(pos, &raw);
    let n = norm(&v);
    let target = rng.random_range(0.0..SAMPLE_STEP_BOUND);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x *= target / n);
    }
    v
}

fn position_velocity(manifold: &Manifold, minus: &[f64], plus: &[f64], h: f64) -> Vec<f64> {
    match manifold.kind {
        ManifoldKind::Torus => minus
            .iter()
            .zip(plus)
            .map(|(a, b)| wrapped_diff(*a, *b) / (2.0 * h))
            .collect(),
        ManifoldKind::Sphere => minus.iter().zip(plus).map(|(a, b)| (b - a) / (2.0 * h)).collect(),
    }
}

/// Checks the three cone-compatibility axioms on `samples` random inputs.
pub fn check_cone_compatibility<R: Rng + ?Sized>(
    retraction: &dyn ConeRetraction,
    manifold: &Manifold,
    samples: usize,
    rng: &mut R,
) -> Result<CompatibilityReport> {
    let mut ret_prop = AxiomCheck::new(FD_TOL);
    let mut zero = AxiomCheck::new(0.0);
    let mut homog = AxiomCheck::new(HOMOGENEITY_TOL);

    for _ in 0..samples {
        let pos = manifold.sample_uniform(rng);
        let pos = pos.coords();
        let r = rng.random_range(0.1..3.0);
        let dr = r * rng.random_range(-SAMPLE_STEP_BOUND..SAMPLE_STEP_BOUND);
        let dpos = sample_tangent(manifold, pos, rng);

        // (i) identity at zero and unit differential
        let zeros = vec![0.0; pos.len()];
        let (r0, p0) = retraction.retract_raw(manifold, r, pos, 0.0, &zeros)?;
        ret_prop.record((r0 - r).abs().max(manifold.dist_coords(pos, &p0)));

        let scaled = |s: f64| -> Vec<f64> { dpos.iter().map(|x| x * s).collect() };
        let (rp, pp) = retraction.retract_raw(manifold, r, pos, FD_STEP * dr, &scaled(FD_STEP))?;
        let (rm, pm) = retraction.retract_raw(manifold, r, pos, -FD_STEP * dr, &scaled(-FD_STEP))?;
        let dr_fd = (rp - rm) / (2.0 * FD_STEP);
        let dpos_fd = position_velocity(manifold, &pm, &pp, FD_STEP);
        let pos_err = dpos_fd
            .iter()
            .zip(&dpos)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ret_prop.record((dr_fd - dr).abs().max(pos_err));

        // (ii) apex stays apex
        let (ra, pa) = retraction.retract_raw(manifold, 0.0, pos, dr, &dpos)?;
        zero.record(ra.abs().max(manifold.dist_coords(pos, &pa)));

        // (iii) homogeneity with relative radial step u = δr / r
        let u = dr / r;
        let rt = rng.random_range(0.1..3.0);
        let (r1, t1) = retraction.retract_raw(manifold, r, pos, r * u, &dpos)?;
        let (r2, t2) = retraction.retract_raw(manifold, rt, pos, rt * u, &dpos)?;
        let lhs = rt * r1;
        let rhs = r * r2;
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        homog.record(rel.max(manifold.dist_coords(&t1, &t2)));
    }

    Ok(CompatibilityReport {
        retraction: retraction.name().to_string(),
        samples,
        retraction_property: ret_prop,
        zero_preserving: zero,
        homogeneity: homog,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::dot;

    /// `|<θ, δθ>|` for sphere tangency checks.
    fn tangency_defect(pos: &[f64], dpos: &[f64]) -> f64 {
        dot(pos, dpos).abs()
    }
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn t1(r: f64, x: f64) -> ConeParticle {
        ConeParticle::new(r, Manifold::torus(1).point(vec![x]).unwrap()).unwrap()
    }

    fn tan(dr: f64, dx: f64) -> ConeTangent {
        ConeTangent { dr, dpos: vec![dx] }
    }

    #[test]
    fn distance_examples() {
        let m = Manifold::torus(1);
        assert_eq!(cone_dist(&m, &t1(1.3, 0.4), &t1(1.3, 0.4)), 0.0);
        assert!((cone_dist(&m, &t1(1.0, 0.0), &t1(1.0, PI)) - 2.0).abs() < 1e-15);
        assert!((cone_dist(&m, &t1(2.0, 0.5), &t1(0.0, 1.0)) - 2.0).abs() < 1e-15);
        assert_eq!(cone_dist(&m, &t1(0.0, 0.5), &t1(0.0, 2.0)), 0.0);
    }

    #[test]
    fn canonical_examples() {
        let m = Manifold::torus(1);
        let p = t1(1.0, 0.2);
        assert_eq!(retract_canonical(&m, &p, &tan(0.0, 0.0)).unwrap(), p);
        assert!((retract_canonical(&m, &p, &tan(-0.3, 0.0)).unwrap().r - 0.7).abs() < 1e-15);
        let apex = t1(0.0, 0.2);
        assert_eq!(retract_canonical(&m, &apex, &tan(5.0, 1.0)).unwrap(), apex);
        assert!(matches!(
            retract_canonical(&m, &p, &tan(-1.0, 0.0)),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn mirror_examples() {
        let m = Manifold::torus(1);
        let p = t1(2.0, 0.2);
        assert_eq!(retract_mirror(&m, &p, &tan(0.0, 0.0)).unwrap(), p);
        let out = retract_mirror(&m, &p, &tan(-1.0, 0.0)).unwrap();
        assert!((out.r - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
        assert!((out.r - 1.21306).abs() < 1e-5);
        let s = 0.37;
        let a = retract_mirror(&m, &t1(3.0, 0.1), &tan(3.0 * s, 0.0)).unwrap();
        let b = retract_mirror(&m, &t1(1.0, 0.1), &tan(s, 0.0)).unwrap();
        assert!((a.r - 3.0 * b.r).abs() <= 1e-15 * a.r);
    }

    #[test]
    fn induced_examples() {
        let s = Manifold::sphere(2);
        let p = ConeParticle::new(1.0, s.point(vec![1.0, 0.0, 0.0]).unwrap()).unwrap();
        let zero = ConeTangent::zero(&s);
        assert_eq!(retract_induced(&s, &p, &zero).unwrap(), p);
        let t = ConeTangent {
            dr: 0.0,
            dpos: vec![0.0, 0.3, 0.0],
        };
        let out = retract_induced(&s, &p, &t).unwrap();
        let n = 1.09f64.sqrt();
        assert!((out.r - n).abs() < 1e-15);
        assert!((out.pos.coords()[0] - 1.0 / n).abs() < 1e-15);
        assert!((out.pos.coords()[1] - 0.3 / n).abs() < 1e-15);

        let apex = ConeParticle::new(0.0, p.pos.clone()).unwrap();
        assert_eq!(retract_induced(&s, &apex, &t).unwrap(), apex);

        let m = Manifold::torus(1);
        assert!(matches!(
            retract_induced(&m, &t1(1.0, 0.0), &tan(0.0, 0.0)),
            Err(Error::UnsupportedRetraction { .. })
        ));
        let back = ConeTangent {
            dr: -1.0,
            dpos: vec![0.0; 3],
        };
        assert!(matches!(retract_induced(&s, &p, &back), Err(Error::Degenerate(_))));
    }

    #[test]
    fn sign_serde_roundtrip() {
        assert_eq!(serde_json::to_string(&Sign::Minus).unwrap(), "-1");
        let s: Sign = serde_json::from_str("1").unwrap();
        assert_eq!(s, Sign::Plus);
        assert!(serde_json::from_str::<Sign>("0").is_err());
    }

    #[test]
    fn all_retractions_pass_compatibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for man in [Manifold::torus(1), Manifold::torus(2), Manifold::sphere(2)] {
            for kind in RetractionKind::ALL {
                if !kind.supports(&man) {
                    continue;
                }
                let rep = check_cone_compatibility(&kind, &man, 300, &mut rng).unwrap();
                assert!(rep.pass(), "{kind:?} on {man:?}: {rep:?}");
            }
        }
    }

    struct Corrupted;

    impl ConeRetraction for Corrupted {
        fn name(&self) -> &'static str {
            "corrupted"
        }
        fn retract_raw(&self, m: &Manifold, r: f64, pos: &[f64], dr: f64, dpos: &[f64]) -> Result<(f64, Vec<f64>)> {
            let bent: Vec<f64> = dpos.iter().map(|x| 1.1 * x).collect();
            RetractionKind::Mirror.retract_raw(m, r, pos, dr, &bent)
        }
    }

    #[test]
    fn corrupted_retraction_fails_first_axiom() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rep = check_cone_compatibility(&Corrupted, &Manifold::torus(1), 200, &mut rng).unwrap();
        assert!(!rep.retraction_property.pass);
        assert!(rep.zero_preserving.pass);
        assert!(rep.homogeneity.pass);
    }

    #[test]
    fn induced_output_stays_tangent_consistent() {
        let s = Manifold::sphere(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let p = s.sample_uniform(&mut rng);
            let dpos = sample_tangent(&s, p.coords(), &mut rng);
            assert!(tangency_defect(p.coords(), &dpos) < 1e-10);
            let (_, q) = RetractionKind::Induced.retract_raw(&s, 1.0, p.coords(), 0.2, &dpos).unwrap();
            assert!((norm(&q) - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn cone_triangle_inequality(
            r in proptest::collection::vec(0.0..3.0f64, 3),
            x in proptest::collection::vec(0.0..std::f64::consts::TAU, 6),
        ) {
            let m = Manifold::torus(2);
            let d = |i: usize, j: usize| cone_dist_raw(&m, r[i], &x[2 * i..2 * i + 2], r[j], &x[2 * j..2 * j + 2]);
            prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12);
            prop_assert_eq!(d(0, 1), d(1, 0));
        }

        #[test]
        fn mirror_mass_ratio_depends_only_on_relative_step(r in 0.01..50.0f64, u in -5.0..5.0f64) {
            let m = Manifold::torus(1);
            let (r1, _) = RetractionKind::Mirror.retract_raw(&m, r, &[0.0], u * r, &[0.0]).unwrap();
            let ratio = (r1 * r1) / (r * r);
            prop_assert!((ratio - (2.0 * u).exp()).abs() <= 1e-12 * (2.0 * u).exp());
        }

        #[test]
        fn apex_absorbs(dr in -5.0..5.0f64, dx in -1.0..1.0f64) {
            let m = Manifold::torus(1);
            for kind in [RetractionKind::Canonical, RetractionKind::Mirror] {
                let (r, _) = kind.retract_raw(&m, 0.0, &[1.0], dr, &[dx]).unwrap();
                prop_assert_eq!(r, 0.0);
            }
        }
    }
}
