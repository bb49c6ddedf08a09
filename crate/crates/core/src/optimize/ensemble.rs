use rand::Rng;

use crate::cone::{ConeParticle, Sign};
use crate::error::{invalid, Result};
use crate::manifold::Manifold;
use crate::problem::{Atom, DiscreteMeasure};

/// `m` cone particles; the projected measure is `(1/m) Σ r_i² δ_{θ_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    manifold: Manifold,
    particles: Vec<ConeParticle>,
}

fn alternating_sign(i: usize, signed: bool) -> Sign {
    if signed && i % 2 == 1 {
        Sign::Minus
    } else {
        Sign::Plus
    }
}

impl ParticleEnsemble {
    pub fn new(manifold: Manifold, particles: Vec<ConeParticle>) -> Result<Self> {
        if particles.iter().any(|p| !manifold.contains(&p.pos)) {
            return Err(invalid("particle position is not on the ensemble's manifold"));
        }
        Ok(Self { manifold, particles })
    }

    /// Particles on the uniform grid with equal radii `√total_mass`, so the
    /// projected mass is `total_mass`. Signed ensembles alternate signs.
    pub fn grid(manifold: Manifold, m: usize, total_mass: f64, signed: bool) -> Result<Self> {
        check_mass(total_mass)?;
        let grid = manifold.uniform_grid(m)?;
        let r = total_mass.sqrt();
        let particles = grid
            .points
            .into_iter()
            .enumerate()
            .map(|(i, p)| ConeParticle {
                r,
                pos: p,
                sign: alternating_sign(i, signed),
            })
            .collect();
        Ok(Self { manifold, particles })
    }

    /// Independent uniform positions with equal radii.
    pub fn uniform_random<R: Rng + ?Sized>(
        manifold: Manifold,
        m: usize,
        total_mass: f64,
        signed: bool,
        rng: &mut R,
    ) -> Result<Self> {
        check_mass(total_mass)?;
        if m < 1 {
            return Err(invalid("ensemble size must be at least 1"));
        }
        let r = total_mass.sqrt();
        let particles = (0..m)
            .map(|i| ConeParticle {
                r,
                pos: manifold.sample_uniform(rng),
                sign: alternating_sign(i, signed),
            })
            .collect();
        Ok(Self { manifold, particles })
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn particles(&self) -> &[ConeParticle] {
        &self.particles
    }

    pub fn particles_mut(&mut self) -> &mut [ConeParticle] {
        &mut self.particles
    }

    pub fn m(&self) -> usize {
        self.particles.len()
    }

    /// Projected mass carried by particle `i`: `r_i² / m`.
    pub fn weight(&self, i: usize) -> f64 {
        self.particles[i].r.powi(2) / self.m() as f64
    }

    /// Homogeneous projection: atoms `(r_i²/m, θ_i, sign_i)`, apex particles
    /// omitted.
    pub fn project(&self) -> DiscreteMeasure {
        let m = self.m() as f64;
        let atoms = self
            .particles
            .iter()
            .filter(|p| p.r > 0.0)
            .map(|p| Atom::signed(p.r * p.r / m, p.pos.clone(), p.sign))
            .collect();
        DiscreteMeasure::new(self.manifold, atoms).expect("ensemble particles are valid atoms")
    }

    /// Inverse of [`ParticleEnsemble::project`] for a measure: one particle
    /// per atom with `r = √(m · mass)`.
    pub fn lift(nu: &DiscreteMeasure) -> Self {
        let m = nu.len() as f64;
        let particles = nu
            .atoms()
            .iter()
            .map(|a| ConeParticle {
                r: (m * a.mass).sqrt(),
                pos: a.pos.clone(),
                sign: a.sign,
            })
            .collect();
        Self {
            manifold: nu.manifold(),
            particles,
        }
    }
}

fn check_mass(total_mass: f64) -> Result<()> {
    if !(total_mass > 0.0 && total_mass.is_finite()) {
        return Err(invalid(format!("initial total mass must be positive, got {total_mass}")));
    }
    Ok(())
}
