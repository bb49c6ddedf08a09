//! Parameter spaces: the flat torus `T^d` (angle coordinates) and the round
//! sphere `S^d` (unit vectors in `R^{d+1}`).
//!
//! Points are stored as plain coordinate vectors. Torus angles are always
//! reduced to `[0, 2π)`; sphere points are unit vectors. Tangent vectors are
//! stored in the same coordinates (ambient coordinates for the sphere), and
//! `tangent_basis` provides the orthonormal frame used for normal
//! coordinates and Hessians.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Injectivity radius of both supported manifolds.
pub const INJECTIVITY_RADIUS: f64 = PI;

/// Log-map inputs at or beyond this distance are rejected as cut-locus inputs.
pub const CUT_LOCUS_GUARD: f64 = PI - 1e-9;

const SPHERE_NORM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Torus,
    Sphere,
}

/// A compact manifold without boundary: its kind and intrinsic dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Manifold {
    pub kind: ManifoldKind,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Builds a point without validation. Callers must have canonicalized
    /// the coordinates already.
    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        Self { coords }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub base: Point,
    pub delta: Vec<f64>,
}

impl TangentVector {
    pub fn norm(&self) -> f64 {
        norm(&self.delta)
    }
}

/// A product grid on the torus together with the bound on its covering radius.
#[derive(Clone, Debug)]
pub struct Grid {
    pub points: Vec<Point>,
    pub covering_radius: f64,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Reduces an angle to `[0, 2π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed difference `b - a` reduced to `(-π, π]`.
pub fn wrapped_diff(a: f64, b: f64) -> f64 {
    let d = (b - a).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// `|wrapped_diff(a, b)|`, computed symmetrically in `a` and `b`.
fn wrapped_abs(a: f64, b: f64) -> f64 {
    let d = (b - a).abs() % TAU;
    d.min(TAU - d)
}

impl Manifold {
    pub fn new(kind: ManifoldKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("manifold dimension must be at least 1"));
        }
        Ok(Self { kind, dim })
    }

    /// # Panics
    /// If `dim == 0`.
    pub fn torus(dim: usize) -> Self {
        Self::new(ManifoldKind::Torus, dim).expect("torus dimension must be positive")
    }

    /// # Panics
    /// If `dim == 0`.
    pub fn sphere(dim: usize) -> Self {
        Self::new(ManifoldKind::Sphere, dim).expect("sphere dimension must be positive")
    }

    /// Number of stored coordinates: `d` on the torus, `d + 1` on the sphere.
    pub fn coord_len(&self) -> usize {
        match self.kind {
            ManifoldKind::Torus => self.dim,
            ManifoldKind::Sphere => self.dim + 1,
        }
    }

    /// Riemannian volume of the whole manifold.
    pub fn volume(&self) -> f64 {
        match self.kind {
            ManifoldKind::Torus => TAU.powi(self.dim as i32),
            ManifoldKind::Sphere => {
                // |S^0| = 2, |S^1| = 2π, |S^d| = 2π/(d-1) |S^{d-2}|
                let (mut v, start) = if self.dim.is_multiple_of(2) { (2.0, 0) } else { (TAU, 1) };
                let mut k = start;
                while k < self.dim {
                    k += 2;
                    v *= TAU / (k as f64 - 1.0);
                }
                v
            }
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.coord_len() {
            return Err(Error::DimensionMismatch {
                expected: self.coord_len(),
                found: len,
            });
        }
        Ok(())
    }

    /// Validates and canonicalizes coordinates. Torus angles are wrapped into
    /// `[0, 2π)`; sphere coordinates must already have unit norm.
    pub fn point(&self, coords: Vec<f64>) -> Result<Point> {
        self.check_len(coords.len())?;
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        match self.kind {
            ManifoldKind::Torus => Ok(Point {
                coords: coords.into_iter().map(wrap_angle).collect(),
            }),
            ManifoldKind::Sphere => {
                let n = norm(&coords);
                if (n - 1.0).abs() > SPHERE_NORM_TOL {
                    return Err(invalid(format!("sphere point has norm {n}, expected 1")));
                }
                Ok(Point { coords })
            }
        }
    }

    /// Like [`Manifold::point`] but rescales sphere coordinates to unit norm.
    pub fn point_normalized(&self, mut coords: Vec<f64>) -> Result<Point> {
        if self.kind == ManifoldKind::Sphere {
            self.check_len(coords.len())?;
            let n = norm(&coords);
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::Degenerate("cannot normalize a zero vector".into()));
            }
            coords.iter_mut().for_each(|c| *c /= n);
        }
        self.point(coords)
    }

    pub fn contains(&self, p: &Point) -> bool {
        if p.coords.len() != self.coord_len() {
            return false;
        }
        match self.kind {
            ManifoldKind::Torus => p.coords.iter().all(|c| (0.0..TAU).contains(c)),
            ManifoldKind::Sphere => (norm(&p.coords) - 1.0).abs() <= SPHERE_NORM_TOL,
        }
    }

    pub fn geodesic_dist(&self, a: &Point, b: &Point) -> Result<f64> {
        self.check_len(a.coords.len())?;
        self.check_len(b.coords.len())?;
        Ok(self.dist_coords(&a.coords, &b.coords))
    }

    pub(crate) fn dist_coords(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            ManifoldKind::Torus => a
                .iter()
                .zip(b)
                .map(|(x, y)| wrapped_abs(*x, *y).powi(2))
                .sum::<f64>()
                .sqrt(),
            ManifoldKind::Sphere => sphere_angle(a, b),
        }
    }

    pub fn log_map(&self, base: &Point, target: &Point) -> Result<TangentVector> {
        self.check_len(base.coords.len())?;
        self.check_len(target.coords.len())?;
        let delta = self.log_coords(&base.coords, &target.coords)?;
        Ok(TangentVector {
            base: base.clone(),
            delta,
        })
    }

    pub(crate) fn log_coords(&self, base: &[f64], target: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            ManifoldKind::Torus => {
                let delta: Vec<f64> = base
                    .iter()
                    .zip(target)
                    .map(|(a, b)| wrapped_diff(*a, *b))
                    .collect();
                if norm(&delta) >= CUT_LOCUS_GUARD {
                    return Err(Error::Degenerate(
                        "log map target on or near the cut locus".into(),
                    ));
                }
                Ok(delta)
            }
            ManifoldKind::Sphere => {
                let c = dot(base, target);
                let mut v: Vec<f64> = target.iter().zip(base).map(|(t, b)| t - c * b).collect();
                let nv = norm(&v);
                let angle = nv.atan2(c);
                if angle >= CUT_LOCUS_GUARD {
                    return Err(Error::Degenerate(
                        "log map target on or near the antipode".into(),
                    ));
                }
                if nv == 0.0 {
                    return Ok(vec![0.0; base.len()]);
                }
                let s = angle / nv;
                v.iter_mut().for_each(|x| *x *= s);
                Ok(v)
            }
        }
    }

    /// Exact exponential map (equal to the retraction on the torus).
    pub fn exp_map(&self, base: &Point, v: &TangentVector) -> Result<Point> {
        self.check_len(base.coords.len())?;
        self.check_len(v.delta.len())?;
        Ok(Point {
            coords: self.exp_coords(&base.coords, &v.delta),
        })
    }

    pub(crate) fn exp_coords(&self, base: &[f64], delta: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::Torus => self.retract_coords(base, delta),
            ManifoldKind::Sphere => {
                let t = norm(delta);
                if t == 0.0 {
                    return base.to_vec();
                }
                let (s, c) = t.sin_cos();
                let mut out: Vec<f64> = base
                    .iter()
                    .zip(delta)
                    .map(|(b, d)| c * b + s * d / t)
                    .collect();
                let n = norm(&out);
                out.iter_mut().for_each(|x| *x /= n);
                out
            }
        }
    }

    /// Retraction on the manifold: coordinate addition modulo 2π on the
    /// torus, add-and-renormalize on the sphere.
    pub fn retract_point(&self, base: &Point, v: &TangentVector) -> Result<Point> {
        self.check_len(base.coords.len())?;
        self.check_len(v.delta.len())?;
        Ok(Point {
            coords: self.retract_coords(&base.coords, &v.delta),
        })
    }

    pub(crate) fn retract_coords(&self, base: &[f64], delta: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::Torus => base
                .iter()
                .zip(delta)
                .map(|(b, d)| wrap_angle(b + d))
                .collect(),
            ManifoldKind::Sphere => {
                let mut out: Vec<f64> = base.iter().zip(delta).map(|(b, d)| b + d).collect();
                let n = norm(&out);
                out.iter_mut().for_each(|x| *x /= n);
                out
            }
        }
    }

    /// Orthogonal projection of an ambient vector onto the tangent space.
    pub fn project_tangent(&self, base: &[f64], v: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::Torus => v.to_vec(),
            ManifoldKind::Sphere => {
                let c = dot(base, v);
                v.iter().zip(base).map(|(x, b)| x - c * b).collect()
            }
        }
    }

    /// Orthonormal frame of the tangent space, `dim` vectors in stored
    /// coordinates. Deterministic in `base`.
    pub fn tangent_basis(&self, base: &[f64]) -> Vec<Vec<f64>> {
        match self.kind {
            ManifoldKind::Torus => (0..self.dim)
                .map(|j| {
                    let mut e = vec![0.0; self.dim];
                    e[j] = 1.0;
                    e
                })
                .collect(),
            ManifoldKind::Sphere => {
                let n = base.len();
                let skip = (0..n)
                    .max_by(|&i, &j| base[i].abs().total_cmp(&base[j].abs()))
                    .unwrap_or(0);
                let mut basis: Vec<Vec<f64>> = Vec::with_capacity(self.dim);
                for j in (0..n).filter(|&j| j != skip) {
                    let mut e = vec![0.0; n];
                    e[j] = 1.0;
                    // two passes of Gram-Schmidt for stability
                    for _ in 0..2 {
                        let c = dot(&e, base);
                        e.iter_mut().zip(base).for_each(|(x, b)| *x -= c * b);
                        for q in &basis {
                            let c = dot(&e, q);
                            e.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                        }
                    }
                    let ne = norm(&e);
                    e.iter_mut().for_each(|x| *x /= ne);
                    basis.push(e);
                }
                basis
            }
        }
    }

    /// Coordinates of a tangent vector in [`Manifold::tangent_basis`].
    pub fn to_frame(&self, base: &[f64], v: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::Torus => v.to_vec(),
            ManifoldKind::Sphere => self
                .tangent_basis(base)
                .iter()
                .map(|e| dot(e, v))
                .collect(),
        }
    }

    /// Inverse of [`Manifold::to_frame`].
    pub fn from_frame(&self, base: &[f64], coords: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::Torus => coords.to_vec(),
            ManifoldKind::Sphere => {
                let mut out = vec![0.0; base.len()];
                for (e, c) in self.tangent_basis(base).iter().zip(coords) {
                    out.iter_mut().zip(e).for_each(|(o, x)| *o += c * x);
                }
                out
            }
        }
    }

    /// Normal coordinates of `target` in the frame at `base`.
    pub fn normal_coords(&self, base: &Point, target: &Point) -> Result<Vec<f64>> {
        let v = self.log_map(base, target)?;
        Ok(self.to_frame(&base.coords, &v.delta))
    }

    /// Riemannian Hessian (in the tangent frame) of a function whose smooth
    /// extension has Euclidean gradient `egrad` and Hessian `ehess` in stored
    /// coordinates.
    pub fn riemannian_hessian(&self, base: &[f64], egrad: &[f64], ehess: &DMatrix<f64>) -> DMatrix<f64> {
        match self.kind {
            ManifoldKind::Torus => ehess.clone(),
            ManifoldKind::Sphere => {
                let basis = self.tangent_basis(base);
                let radial = dot(base, egrad);
                let n = base.len();
                let b = DMatrix::from_fn(n, self.dim, |i, j| basis[j][i]);
                let mut h = b.transpose() * ehess * &b;
                for j in 0..self.dim {
                    h[(j, j)] -= radial;
                }
                h
            }
        }
    }

    /// Product grid of `m` points on the torus. For `d = 1` these are `m`
    /// equispaced angles. For `d = 2` the grid is `n × n` with `n = ceil(√m)`,
    /// minus `n² − m` points removed along two staggered diagonals so that no
    /// two removed points are horizontal or vertical neighbours. The reported
    /// covering radius bound is `π d / floor(m^(1/d))`.
    pub fn uniform_grid(&self, m: usize) -> Result<Grid> {
        if m < 1 {
            return Err(invalid("grid size must be at least 1"));
        }
        if self.kind != ManifoldKind::Torus {
            return Err(Error::Unsupported(
                "uniform grids are only provided on the torus".into(),
            ));
        }
        let covering_radius = PI * self.dim as f64 / int_root_floor(m, self.dim as u32) as f64;
        let points = match self.dim {
            1 => (0..m)
                .map(|k| Point {
                    coords: vec![TAU * k as f64 / m as f64],
                })
                .collect(),
            2 => {
                let n = int_root_ceil(m, 2);
                let h = TAU / n as f64;
                let mut removed = vec![false; n * n];
                for j in 0..n * n - m {
                    let row = j % n;
                    let col = (row + (j / n) * (n / 2)) % n;
                    removed[row * n + col] = true;
                }
                (0..n * n)
                    .filter(|&k| !removed[k])
                    .map(|k| Point {
                        coords: vec![(k / n) as f64 * h, (k % n) as f64 * h],
                    })
                    .collect()
            }
            _ => {
                return Err(Error::Unsupported(
                    "uniform grids are provided for d <= 2; use sampling in higher dimension".into(),
                ))
            }
        };
        Ok(Grid {
            points,
            covering_radius,
        })
    }

    /// Uniform sample: independent uniform angles on the torus, a normalized
    /// standard Gaussian vector on the sphere.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self.kind {
            ManifoldKind::Torus => Point {
                coords: (0..self.dim).map(|_| wrap_angle(rng.random::<f64>() * TAU)).collect(),
            },
            ManifoldKind::Sphere => loop {
                let v: Vec<f64> = (0..=self.dim).map(|_| rng.sample(StandardNormal)).collect();
                let n = norm(&v);
                if n > 1e-12 {
                    break Point {
                        coords: v.into_iter().map(|x| x / n).collect(),
                    };
                }
            },
        }
    }
}

fn sphere_angle(a: &[f64], b: &[f64]) -> f64 {
    // 2 atan2(|a - b|, |a + b|): equals arccos(<a, b>), exactly symmetric and
    // accurate for nearby points.
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let sum = a.iter().zip(b).map(|(x, y)| (x + y).powi(2)).sum::<f64>().sqrt();
    2.0 * diff.atan2(sum)
}

fn int_root_ceil(m: usize, d: u32) -> usize {
    let mut n = (m as f64).powf(1.0 / d as f64).round().max(1.0) as usize;
    while n.pow(d) < m {
        n += 1;
    }
    while n > 1 && (n - 1).pow(d) >= m {
        n -= 1;
    }
    n
}

fn int_root_floor(m: usize, d: u32) -> usize {
    let mut n = (m as f64).powf(1.0 / d as f64).round().max(1.0) as usize;
    while n.pow(d) > m {
        n -= 1;
    }
    while (n + 1).pow(d) <= m {
        n += 1;
    }
    n
}
