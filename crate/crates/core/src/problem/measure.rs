//! Finite nonnegative measures on Θ, with optional sign tags for the doubled
//! (signed) formulation.

use serde::{Deserialize, Serialize};

use crate::cone::Sign;
use crate::error::{invalid, Result};
use crate::manifold::{Manifold, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub mass: f64,
    pub pos: Point,
    #[serde(default)]
    pub sign: Sign,
}

impl Atom {
    pub fn new(mass: f64, pos: Point) -> Self {
        Self {
            mass,
            pos,
            sign: Sign::Plus,
        }
    }

    pub fn signed(mass: f64, pos: Point, sign: Sign) -> Self {
        Self { mass, pos, sign }
    }

    /// `sign · mass`.
    pub fn weight(&self) -> f64 {
        self.sign.value() * self.mass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    manifold: Manifold,
    atoms: Vec<Atom>,
}

impl DiscreteMeasure {
    pub fn empty(manifold: Manifold) -> Self {
        Self {
            manifold,
            atoms: Vec::new(),
        }
    }

    pub fn new(manifold: Manifold, atoms: Vec<Atom>) -> Result<Self> {
        let mut m = Self::empty(manifold);
        for a in atoms {
            m.push(a)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, atom: Atom) -> Result<()> {
        if !(atom.mass >= 0.0 && atom.mass.is_finite()) {
            return Err(invalid(format!("atom mass must be finite and >= 0, got {}", atom.mass)));
        }
        if !self.manifold.contains(&atom.pos) {
            return Err(invalid("atom position is not a point of the measure's manifold"));
        }
        self.atoms.push(atom);
        Ok(())
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Unsigned total mass `ν(Θ)`.
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn has_negative(&self) -> bool {
        self.atoms.iter().any(|a| a.sign == Sign::Minus)
    }

    /// Same atoms with masses multiplied by `c ≥ 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            manifold: self.manifold,
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    mass: a.mass * c,
                    ..a.clone()
                })
                .collect(),
        }
    }

    /// Drops atoms with mass `<= threshold`.
    pub fn pruned(&self, threshold: f64) -> Self {
        Self {
            manifold: self.manifold,
            atoms: self.atoms.iter().filter(|a| a.mass > threshold).cloned().collect(),
        }
    }

    /// Decomposition by sign tag into `(positive, negative)` parts, both with
    /// `Plus` tags.
    pub fn split_signed(&self) -> (DiscreteMeasure, DiscreteMeasure) {
        let mut pos = Self::empty(self.manifold);
        let mut neg = Self::empty(self.manifold);
        for a in &self.atoms {
            let part = Atom {
                sign: Sign::Plus,
                ..a.clone()
            };
            match a.sign {
                Sign::Plus => pos.atoms.push(part),
                Sign::Minus => neg.atoms.push(part),
            }
        }
        (pos, neg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_and_split() {
        let m = Manifold::torus(1);
        let p = m.point(vec![0.5]).unwrap();
        assert!(DiscreteMeasure::new(m, vec![Atom::new(-1.0, p.clone())]).is_err());
        let bad = Manifold::torus(2).point(vec![0.1, 0.2]).unwrap();
        assert!(DiscreteMeasure::new(m, vec![Atom::new(1.0, bad)]).is_err());

        let nu = DiscreteMeasure::new(m, vec![Atom::new(1.0, p.clone()), Atom::new(2.0, p.clone())]).unwrap();
        let (a, b) = nu.split_signed();
        assert_eq!(a, nu);
        assert!(b.is_empty());
        assert_eq!(nu.total_mass(), 3.0);

        let mixed = DiscreteMeasure::new(
            m,
            vec![Atom::new(1.0, p.clone()), Atom::signed(0.5, p.clone(), Sign::Minus)],
        )
        .unwrap();
        let (a, b) = mixed.split_signed();
        assert_eq!(a.total_mass(), 1.0);
        assert_eq!(b.total_mass(), 0.5);
        assert!(b.atoms().iter().all(|x| x.sign == Sign::Plus));
    }

    #[test]
    fn serde_roundtrip() {
        let m = Manifold::torus(1);
        let nu = DiscreteMeasure::new(
            m,
            vec![Atom::signed(0.25, m.point(vec![1.0]).unwrap(), Sign::Minus)],
        )
        .unwrap();
        let s = serde_json::to_string(&nu).unwrap();
        let back: DiscreteMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, nu);
    }
}
