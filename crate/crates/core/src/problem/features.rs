//! Feature models `φ: Θ → F` with explicit finite-dimensional feature maps.
//!
//! `F` is always `R^D` with the plain dot product, so every kernel is
//! `k(θ, θ') = <φ(θ), φ(θ')>`. Models expose the map itself, its Jacobian in
//! the tangent frame, and fused "pair" evaluations `θ ↦ <φ(θ), c>` with
//! gradient and Hessian, which is what the first variation needs.

use std::f64::consts::SQRT_2;
use std::fmt::Debug;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::manifold::{dot, Manifold, ManifoldKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureMode {
    ExactKernel,
    EmpiricalSample,
}

pub trait FeatureModel: Send + Sync + Debug {
    fn manifold(&self) -> Manifold;
    fn mode(&self) -> FeatureMode;
    fn feature_dim(&self) -> usize;

    /// Writes `φ(θ)` into `out` (length `feature_dim`).
    fn eval(&self, theta: &[f64], out: &mut [f64]);

    /// Jacobian of `φ` at `θ`, `feature_dim × dim`, columns in the tangent frame.
    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64>;

    /// `<φ(θ), c>`.
    fn pair(&self, theta: &[f64], c: &[f64]) -> f64 {
        let mut phi = vec![0.0; self.feature_dim()];
        self.eval(theta, &mut phi);
        dot(&phi, c)
    }

    /// `<φ(θ), c>` and its Riemannian gradient (stored coordinates) in `grad`.
    fn pair_grad(&self, theta: &[f64], c: &[f64], grad: &mut [f64]) -> f64;

    /// Value, Riemannian gradient (stored coordinates) and Riemannian Hessian
    /// (tangent frame) of `θ ↦ <φ(θ), c>`.
    fn pair_hess(&self, theta: &[f64], c: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>);

    /// True when `θ` sits on a non-differentiability set of the model.
    fn near_kink(&self, _theta: &[f64]) -> bool {
        false
    }

    fn as_empirical(&self) -> Option<&dyn EmpiricalFeatures> {
        None
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        explicit_kernel(self, a, b)
    }

    /// Riemannian gradient of `k(·, b)` at `a`, stored coordinates.
    fn grad1_kernel(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        explicit_grad1_kernel(self, a, b)
    }

    /// Riemannian Hessian of `k(·, b)` at `a`, frame at `a`.
    fn hess1_kernel(&self, a: &[f64], b: &[f64]) -> DMatrix<f64> {
        explicit_hess1_kernel(self, a, b)
    }

    /// Mixed derivative `∇_a ∇_b k(a, b)`: rows in the frame at `a`, columns
    /// in the frame at `b`.
    fn cross_kernel(&self, a: &[f64], b: &[f64]) -> DMatrix<f64> {
        explicit_cross_kernel(self, a, b)
    }
}

/// Per-sample access for models whose feature space is an empirical sample
/// of size `N`: `φ(θ)_n = σ_n(θ)/√N`.
pub trait EmpiricalFeatures: Send + Sync {
    fn sample_count(&self) -> usize;

    /// Unscaled per-sample feature `σ_n(θ)` for each index.
    fn eval_samples(&self, theta: &[f64], idx: &[usize], out: &mut [f64]);

    /// `Σ_k c_k σ_{idx_k}(θ)` and its Riemannian gradient (stored coordinates).
    fn pair_grad_samples(&self, theta: &[f64], idx: &[usize], c: &[f64], grad: &mut [f64]) -> f64;
}

pub fn explicit_kernel<M: FeatureModel + ?Sized>(m: &M, a: &[f64], b: &[f64]) -> f64 {
    let mut pb = vec![0.0; m.feature_dim()];
    m.eval(b, &mut pb);
    m.pair(a, &pb)
}

pub fn explicit_grad1_kernel<M: FeatureModel + ?Sized>(m: &M, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut pb = vec![0.0; m.feature_dim()];
    m.eval(b, &mut pb);
    let mut g = vec![0.0; m.manifold().coord_len()];
    m.pair_grad(a, &pb, &mut g);
    g
}

pub fn explicit_hess1_kernel<M: FeatureModel + ?Sized>(m: &M, a: &[f64], b: &[f64]) -> DMatrix<f64> {
    let mut pb = vec![0.0; m.feature_dim()];
    m.eval(b, &mut pb);
    m.pair_hess(a, &pb).2
}

pub fn explicit_cross_kernel<M: FeatureModel + ?Sized>(m: &M, a: &[f64], b: &[f64]) -> DMatrix<f64> {
    m.jacobian(a).transpose() * m.jacobian(b)
}

// ---------------------------------------------------------------------------
// Dirichlet low-pass filter

/// Real Fourier features of order `n` on `T^1`:
/// `[1, √2 cos x, √2 sin x, …, √2 cos nx, √2 sin nx]` and two derivatives.
fn fourier_basis(x: f64, n: usize, v: &mut [f64], dv: &mut [f64], ddv: &mut [f64]) {
    v[0] = 1.0;
    dv[0] = 0.0;
    ddv[0] = 0.0;
    for k in 1..=n {
        let kf = k as f64;
        let (s, c) = (kf * x).sin_cos();
        v[2 * k - 1] = SQRT_2 * c;
        v[2 * k] = SQRT_2 * s;
        dv[2 * k - 1] = -SQRT_2 * kf * s;
        dv[2 * k] = SQRT_2 * kf * c;
        ddv[2 * k - 1] = -SQRT_2 * kf * kf * c;
        ddv[2 * k] = -SQRT_2 * kf * kf * s;
    }
}

/// `D_n(u) = 1 + 2 Σ_{k≤n} cos(ku)` with its first two derivatives.
pub fn dirichlet_1d(n: usize, u: f64) -> (f64, f64, f64) {
    let (mut v, mut d1, mut d2) = (1.0, 0.0, 0.0);
    for k in 1..=n {
        let kf = k as f64;
        let (s, c) = (kf * u).sin_cos();
        v += 2.0 * c;
        d1 -= 2.0 * kf * s;
        d2 -= 2.0 * kf * kf * c;
    }
    (v, d1, d2)
}

/// Dirichlet filter of order `n_f` on `T^1`, tensorized on `T^2`.
#[derive(Clone, Debug)]
pub struct DirichletFeatures {
    dim: usize,
    n: usize,
}

pub fn make_dirichlet_features(dim: usize, n_f: usize) -> Result<DirichletFeatures> {
    if !(1..=2).contains(&dim) {
        return Err(invalid(format!("Dirichlet features need d in {{1, 2}}, got {dim}")));
    }
    if n_f < 1 {
        return Err(invalid("n_f must be at least 1"));
    }
    Ok(DirichletFeatures { dim, n: n_f })
}

impl DirichletFeatures {
    pub fn order(&self) -> usize {
        self.n
    }

    fn width(&self) -> usize {
        2 * self.n + 1
    }

    fn bases(&self, x: f64) -> [Vec<f64>; 3] {
        let w = self.width();
        let (mut v, mut dv, mut ddv) = (vec![0.0; w], vec![0.0; w], vec![0.0; w]);
        fourier_basis(x, self.n, &mut v, &mut dv, &mut ddv);
        [v, dv, ddv]
    }

    /// For `d = 2`: contracts `c` (row index = first coordinate) with the
    /// second-coordinate basis vectors.
    fn contract(&self, c: &[f64], v2: &[f64]) -> Vec<f64> {
        let w = self.width();
        (0..w).map(|a| dot(&c[a * w..(a + 1) * w], v2)).collect()
    }
}

impl FeatureModel for DirichletFeatures {
    fn manifold(&self) -> Manifold {
        Manifold::torus(self.dim)
    }

    fn mode(&self) -> FeatureMode {
        FeatureMode::ExactKernel
    }

    fn feature_dim(&self) -> usize {
        self.width().pow(self.dim as u32)
    }

    fn eval(&self, theta: &[f64], out: &mut [f64]) {
        let [v1, _, _] = self.bases(theta[0]);
        if self.dim == 1 {
            out.copy_from_slice(&v1);
            return;
        }
        let [v2, _, _] = self.bases(theta[1]);
        let w = self.width();
        for a in 0..w {
            for b in 0..w {
                out[a * w + b] = v1[a] * v2[b];
            }
        }
    }

    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let [v1, d1, _] = self.bases(theta[0]);
        if self.dim == 1 {
            return DMatrix::from_column_slice(self.width(), 1, &d1);
        }
        let [v2, d2, _] = self.bases(theta[1]);
        let w = self.width();
        DMatrix::from_fn(w * w, 2, |i, j| {
            let (a, b) = (i / w, i % w);
            if j == 0 {
                d1[a] * v2[b]
            } else {
                v1[a] * d2[b]
            }
        })
    }

    fn pair(&self, theta: &[f64], c: &[f64]) -> f64 {
        let [v1, _, _] = self.bases(theta[0]);
        if self.dim == 1 {
            return dot(&v1, c);
        }
        let [v2, _, _] = self.bases(theta[1]);
        dot(&v1, &self.contract(c, &v2))
    }

    fn pair_grad(&self, theta: &[f64], c: &[f64], grad: &mut [f64]) -> f64 {
        let [v1, d1, _] = self.bases(theta[0]);
        if self.dim == 1 {
            grad[0] = dot(&d1, c);
            return dot(&v1, c);
        }
        let [v2, d2, _] = self.bases(theta[1]);
        let w0 = self.contract(c, &v2);
        let w1 = self.contract(c, &d2);
        grad[0] = dot(&d1, &w0);
        grad[1] = dot(&v1, &w1);
        dot(&v1, &w0)
    }

    fn pair_hess(&self, theta: &[f64], c: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        let [v1, d1, dd1] = self.bases(theta[0]);
        if self.dim == 1 {
            return (
                dot(&v1, c),
                vec![dot(&d1, c)],
                DMatrix::from_element(1, 1, dot(&dd1, c)),
            );
        }
        let [v2, d2, dd2] = self.bases(theta[1]);
        let w0 = self.contract(c, &v2);
        let w1 = self.contract(c, &d2);
        let w2 = self.contract(c, &dd2);
        let h12 = dot(&d1, &w1);
        let hess = DMatrix::from_row_slice(2, 2, &[dot(&dd1, &w0), h12, h12, dot(&v1, &w2)]);
        (dot(&v1, &w0), vec![dot(&d1, &w0), dot(&v1, &w1)], hess)
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| dirichlet_1d(self.n, x - y).0).product()
    }

    fn grad1_kernel(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let parts: Vec<_> = a.iter().zip(b).map(|(x, y)| dirichlet_1d(self.n, x - y)).collect();
        (0..self.dim)
            .map(|j| {
                parts
                    .iter()
                    .enumerate()
                    .map(|(i, p)| if i == j { p.1 } else { p.0 })
                    .product()
            })
            .collect()
    }

    fn hess1_kernel(&self, a: &[f64], b: &[f64]) -> DMatrix<f64> {
        let parts: Vec<_> = a.iter().zip(b).map(|(x, y)| dirichlet_1d(self.n, x - y)).collect();
        DMatrix::from_fn(self.dim, self.dim, |j, l| {
            parts
                .iter()
                .enumerate()
                .map(|(i, p)| match (i == j, i == l) {
                    (true, true) => p.2,
                    (true, false) | (false, true) => p.1,
                    (false, false) => p.0,
                })
                .product()
        })
    }

    fn cross_kernel(&self, a: &[f64], b: &[f64]) -> DMatrix<f64> {
        // translation invariance: ∇_a ∇_b k = −∇²_a k
        -self.hess1_kernel(a, b)
    }
}

// ---------------------------------------------------------------------------
// 2-homogeneous ReLU features

/// Two-layer ReLU network features on `S^d`: `φ(θ)_n = σ(<x_n, u(θ)>)/√N` with
/// `u(θ)_j = θ_j |θ_j|` and a frozen sample `x_1..x_N` uniform on `S^d`.
#[derive(Clone, Debug)]
pub struct ReluFeatures {
    ambient: usize,
    n: usize,
    data: Vec<f64>,
    scale: f64,
}

pub const KINK_TOL: f64 = 1e-9;

pub fn make_relu_hom_features<R: Rng + ?Sized>(
    ambient_dim: usize,
    data_sample_size: usize,
    rng: &mut R,
) -> Result<ReluFeatures> {
    if data_sample_size < 1 {
        return Err(invalid("data_sample_size must be at least 1"));
    }
    if ambient_dim < 2 {
        return Err(invalid("ambient dimension must be at least 2"));
    }
    let sphere = Manifold::sphere(ambient_dim - 1);
    let mut data = Vec::with_capacity(ambient_dim * data_sample_size);
    for _ in 0..data_sample_size {
        data.extend(sphere.sample_uniform(rng).into_coords());
    }
    Ok(ReluFeatures {
        ambient: ambient_dim,
        n: data_sample_size,
        data,
        scale: 1.0 / (data_sample_size as f64).sqrt(),
    })
}

/// `w ↦ w|w|` applied coordinatewise.
pub fn signed_square(w: &[f64]) -> Vec<f64> {
    w.iter().map(|x| x * x.abs()).collect()
}

impl ReluFeatures {
    pub fn sample(&self, n: usize) -> &[f64] {
        &self.data[n * self.ambient..(n + 1) * self.ambient]
    }

    fn preact(&self, u: &[f64], n: usize) -> f64 {
        dot(self.sample(n), u)
    }

    /// Unscaled network unit `σ(<x, w|w|>)` for an arbitrary `w ∈ R^{d+1}`.
    pub fn unit(x: &[f64], w: &[f64]) -> f64 {
        dot(x, &signed_square(w)).max(0.0)
    }

    /// Euclidean gradient of `Σ_k c_k σ(<x_{idx_k}, u(θ)>)` with subgradient 0
    /// at the kink, plus its value.
    fn egrad<I: Iterator<Item = (usize, f64)>>(&self, theta: &[f64], terms: I) -> (f64, Vec<f64>, Vec<f64>) {
        let u = signed_square(theta);
        let mut val = 0.0;
        let mut acc = vec![0.0; self.ambient];
        for (n, c) in terms {
            let z = self.preact(&u, n);
            if z > 0.0 {
                val += c * z;
                acc.iter_mut().zip(self.sample(n)).for_each(|(a, x)| *a += c * x);
            }
        }
        // d/dθ_j [θ_j|θ_j|] = 2|θ_j|
        let g = acc.iter().zip(theta).map(|(a, t)| 2.0 * t.abs() * a).collect();
        (val, g, acc)
    }
}

impl FeatureModel for ReluFeatures {
    fn manifold(&self) -> Manifold {
        Manifold::sphere(self.ambient - 1)
    }

    fn mode(&self) -> FeatureMode {
        FeatureMode::EmpiricalSample
    }

    fn feature_dim(&self) -> usize {
        self.n
    }

    fn eval(&self, theta: &[f64], out: &mut [f64]) {
        let u = signed_square(theta);
        for (n, o) in out.iter_mut().enumerate() {
            *o = self.scale * self.preact(&u, n).max(0.0);
        }
    }

    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let man = self.manifold();
        let basis = man.tangent_basis(theta);
        let u = signed_square(theta);
        DMatrix::from_fn(self.n, self.ambient - 1, |n, j| {
            if self.preact(&u, n) > 0.0 {
                self.scale
                    * self
                        .sample(n)
                        .iter()
                        .zip(theta)
                        .zip(&basis[j])
                        .map(|((x, t), e)| 2.0 * t.abs() * x * e)
                        .sum::<f64>()
            } else {
                0.0
            }
        })
    }

    fn pair_grad(&self, theta: &[f64], c: &[f64], grad: &mut [f64]) -> f64 {
        let (val, g, _) = self.egrad(theta, c.iter().map(|ci| ci * self.scale).enumerate());
        grad.copy_from_slice(&self.manifold().project_tangent(theta, &g));
        val
    }

    fn pair_hess(&self, theta: &[f64], c: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        let man = self.manifold();
        let (val, g, acc) = self.egrad(theta, c.iter().map(|ci| ci * self.scale).enumerate());
        // d²/dθ_j² [θ_j|θ_j|] = 2 sign(θ_j); the ReLU contributes nothing off the kink
        let ehess = DMatrix::from_fn(self.ambient, self.ambient, |i, j| {
            if i == j {
                2.0 * theta[i].signum() * acc[i] * (theta[i] != 0.0) as u8 as f64
            } else {
                0.0
            }
        });
        let h = man.riemannian_hessian(theta, &g, &ehess);
        (val, man.project_tangent(theta, &g), h)
    }

    fn near_kink(&self, theta: &[f64]) -> bool {
        let u = signed_square(theta);
        (0..self.n).any(|n| self.preact(&u, n).abs() < KINK_TOL)
    }

    fn as_empirical(&self) -> Option<&dyn EmpiricalFeatures> {
        Some(self)
    }
}

impl EmpiricalFeatures for ReluFeatures {
    fn sample_count(&self) -> usize {
        self.n
    }

    fn eval_samples(&self, theta: &[f64], idx: &[usize], out: &mut [f64]) {
        let u = signed_square(theta);
        for (o, &n) in out.iter_mut().zip(idx) {
            *o = self.preact(&u, n).max(0.0);
        }
    }

    fn pair_grad_samples(&self, theta: &[f64], idx: &[usize], c: &[f64], grad: &mut [f64]) -> f64 {
        let (val, g, _) = self.egrad(theta, idx.iter().copied().zip(c.iter().copied()));
        grad.copy_from_slice(&self.manifold().project_tangent(theta, &g));
        val
    }
}

// ---------------------------------------------------------------------------
// Scalar features on T^1

/// Closed-form scalar functions available by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarFunction {
    Cos,
}

/// A real trigonometric polynomial `φ(θ) = a_0 + Σ_k (a_k cos kθ + b_k sin kθ)`
/// on `T^1`, used as a one-dimensional feature map.
#[derive(Clone, Debug)]
pub struct ScalarFeatures {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

pub enum ScalarSource<'a> {
    Closed(ScalarFunction),
    /// Values at `2K+1` equispaced angles `2πj/(2K+1)`, `j = 0..2K`.
    Samples(&'a [f64]),
}

pub fn make_scalar_features(source: ScalarSource<'_>) -> Result<ScalarFeatures> {
    match source {
        ScalarSource::Closed(ScalarFunction::Cos) => Ok(ScalarFeatures {
            cos: vec![0.0, 1.0],
            sin: vec![0.0, 0.0],
        }),
        ScalarSource::Samples(values) => {
            let n = values.len();
            if n == 0 || n % 2 == 0 {
                return Err(invalid("scalar samples need an odd, positive count of equispaced values"));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(invalid("non-finite scalar sample"));
            }
            let k_max = (n - 1) / 2;
            let nf = n as f64;
            let mut cos = vec![0.0; k_max + 1];
            let mut sin = vec![0.0; k_max + 1];
            for k in 0..=k_max {
                for (j, v) in values.iter().enumerate() {
                    let (s, c) = (std::f64::consts::TAU * (k * j) as f64 / nf).sin_cos();
                    cos[k] += v * c;
                    sin[k] += v * s;
                }
                let w = if k == 0 { 1.0 / nf } else { 2.0 / nf };
                cos[k] *= w;
                sin[k] *= w;
            }
            Ok(ScalarFeatures { cos, sin })
        }
    }
}

impl ScalarFeatures {
    /// `(φ, φ', φ'')` at `x`.
    pub fn value(&self, x: f64) -> (f64, f64, f64) {
        let (mut v, mut d1, mut d2) = (self.cos[0], 0.0, 0.0);
        for k in 1..self.cos.len() {
            let kf = k as f64;
            let (s, c) = (kf * x).sin_cos();
            let (a, b) = (self.cos[k], self.sin[k]);
            v += a * c + b * s;
            d1 += kf * (b * c - a * s);
            d2 -= kf * kf * (a * c + b * s);
        }
        (v, d1, d2)
    }

    /// Minimum of `φ` located by a fine scan plus Newton polishing.
    pub fn minimum(&self) -> (f64, f64) {
        let n = 4096;
        let (mut best_x, mut best_v) = (0.0, f64::INFINITY);
        for j in 0..n {
            let x = std::f64::consts::TAU * j as f64 / n as f64;
            let v = self.value(x).0;
            if v < best_v {
                best_v = v;
                best_x = x;
            }
        }
        for _ in 0..50 {
            let (_, d1, d2) = self.value(best_x);
            if d2 <= 0.0 {
                break;
            }
            let step = d1 / d2;
            best_x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let x = crate::manifold::wrap_angle(best_x);
        (x, self.value(x).0)
    }
}

impl FeatureModel for ScalarFeatures {
    fn manifold(&self) -> Manifold {
        Manifold::torus(1)
    }

    fn mode(&self) -> FeatureMode {
        FeatureMode::ExactKernel
    }

    fn feature_dim(&self) -> usize {
        1
    }

    fn eval(&self, theta: &[f64], out: &mut [f64]) {
        out[0] = self.value(theta[0]).0;
    }

    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.value(theta[0]).1)
    }

    fn pair_grad(&self, theta: &[f64], c: &[f64], grad: &mut [f64]) -> f64 {
        let (v, d1, _) = self.value(theta[0]);
        grad[0] = d1 * c[0];
        v * c[0]
    }

    fn pair_hess(&self, theta: &[f64], c: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        let (v, d1, d2) = self.value(theta[0]);
        (v * c[0], vec![d1 * c[0]], DMatrix::from_element(1, 1, d2 * c[0]))
    }
}

/// Rejects feature models whose manifold is not the torus, for operations
/// that scan grids.
pub(crate) fn require_torus(m: &Manifold, what: &str) -> Result<()> {
    if m.kind != ManifoldKind::Torus {
        return Err(Error::Unsupported(format!("{what} requires a torus parameter space")));
    }
    Ok(())
}
