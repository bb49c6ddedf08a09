//! Conic particle gradient descent, its stochastic variant, and the driver
//! loop with the descent guard.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{ConeParticle, ConeRetraction, RetractionKind, Sign};
use crate::diagnostics::cone_w2_upper;
use crate::error::{invalid, Error, Result};
use crate::manifold::{norm, Point};
use crate::optimize::ensemble::ParticleEnsemble;
use crate::optimize::trajectory::{Trajectory, TrajectoryRow};
use crate::problem::spec::objective_from_residual;
use crate::problem::{Atom, DiscreteMeasure, FirstVariation, ProblemSpec};

/// Maximum number of step halvings the descent guard tries per iteration.
pub const MAX_HALVINGS: u32 = 60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticConfig {
    pub batch_size: usize,
}

/// Geometric ramp of `β` from `initial_factor · β` to `β` over `ramp_iters`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaRamp {
    pub initial_factor: f64,
    pub ramp_iters: usize,
}

impl BetaRamp {
    pub fn factor(&self, k: usize) -> f64 {
        if self.ramp_iters == 0 || k >= self.ramp_iters {
            return 1.0;
        }
        self.initial_factor.powf(1.0 - k as f64 / self.ramp_iters as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Mass step size.
    pub alpha: f64,
    /// Position step size.
    pub beta: f64,
    pub retraction: RetractionKind,
    pub iters: usize,
    /// Halve both step sizes on an objective increase (or an undefined
    /// retraction step) and retry.
    pub descent_guard: bool,
    /// Stop once `‖g_ν‖² ≤ stop_tol`.
    pub stop_tol: f64,
    pub seed: u64,
    pub stochastic: Option<StochasticConfig>,
    pub beta_ramp: Option<BetaRamp>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            beta: 0.01,
            retraction: RetractionKind::Mirror,
            iters: 1000,
            descent_guard: true,
            stop_tol: 0.0,
            seed: 0,
            stochastic: None,
            beta_ramp: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(invalid("stop_tol must be >= 0"));
        }
        if let Some(s) = &self.stochastic {
            if s.batch_size < 1 {
                return Err(invalid("batch_size must be at least 1"));
            }
        }
        if let Some(r) = &self.beta_ramp {
            if !(r.initial_factor > 0.0 && r.initial_factor <= 1.0) {
                return Err(invalid("beta_ramp.initial_factor must be in (0, 1]"));
            }
        }
        Ok(())
    }
}

/// First variation and its gradient at every particle.
struct Direction {
    value: Vec<f64>,
    grad: Vec<Vec<f64>>,
}

fn full_direction(field: &FirstVariation<'_>, particles: &[ConeParticle], coord_len: usize) -> Direction {
    let (value, grad) = particles
        .par_iter()
        .map(|p| {
            let mut g = vec![0.0; coord_len];
            let v = field.value_grad(p.pos.coords(), p.sign, &mut g);
            (v, g)
        })
        .unzip();
    Direction { value, grad }
}

fn weights(ens: &ParticleEnsemble) -> Vec<f64> {
    (0..ens.m()).map(|i| ens.weight(i)).collect()
}

fn grad_norm_sq_of(w: &[f64], dir: &Direction, alpha: f64, beta: f64) -> f64 {
    w.iter()
        .zip(&dir.value)
        .zip(&dir.grad)
        .map(|((w, v), g)| w * (4.0 * alpha * v * v + beta * norm(g).powi(2)))
        .sum()
}

/// Moves every particle by its retraction of the conic gradient.
fn apply(
    ens: &ParticleEnsemble,
    dir: &Direction,
    alpha: f64,
    beta: f64,
    retraction: &dyn ConeRetraction,
) -> Result<ParticleEnsemble> {
    let man = ens.manifold();
    let moved: Result<Vec<ConeParticle>> = ens
        .particles()
        .par_iter()
        .zip(dir.value.par_iter().zip(dir.grad.par_iter()))
        .map(|(p, (v, g))| {
            let dr = -2.0 * alpha * p.r * v;
            let dpos: Vec<f64> = g.iter().map(|x| -beta * x).collect();
            let (r, pos) = retraction.retract_raw(&man, p.r, p.pos.coords(), dr, &dpos)?;
            Ok(ConeParticle {
                r,
                pos: Point::from_raw(pos),
                sign: p.sign,
            })
        })
        .collect();
    ParticleEnsemble::new(man, moved?)
}

/// One step of conic particle gradient descent; `J'_ν` and `∇J'_ν` are
/// evaluated on the measure before the step for all particles.
pub fn cpgd_step(
    spec: &ProblemSpec,
    ensemble: &ParticleEnsemble,
    alpha: f64,
    beta: f64,
    retraction: &dyn ConeRetraction,
) -> Result<ParticleEnsemble> {
    let field = spec.field(&ensemble.project())?;
    let dir = full_direction(&field, ensemble.particles(), ensemble.manifold().coord_len());
    apply(ensemble, &dir, alpha, beta, retraction)
}

/// The projected update `ν⁺ = (T^θ)_#((T^r)² ν)` with `(T^r, T^θ) = T(1, ·)`.
pub fn projected_update(
    spec: &ProblemSpec,
    nu: &DiscreteMeasure,
    alpha: f64,
    beta: f64,
    retraction: &dyn ConeRetraction,
) -> Result<DiscreteMeasure> {
    let man = nu.manifold();
    let field = spec.field(nu)?;
    let mut atoms = Vec::with_capacity(nu.len());
    for a in nu.atoms() {
        let mut g = vec![0.0; man.coord_len()];
        let v = field.value_grad(a.pos.coords(), a.sign, &mut g);
        let dpos: Vec<f64> = g.iter().map(|x| -beta * x).collect();
        let (tr, tpos) = retraction.retract_raw(&man, 1.0, a.pos.coords(), -2.0 * alpha * v, &dpos)?;
        atoms.push(Atom::signed(tr * tr * a.mass, Point::from_raw(tpos), a.sign));
    }
    DiscreteMeasure::new(man, atoms)
}

/// `‖g_ν‖²_{L²(ν)} = ∫ (4α J'_ν² + β ‖∇J'_ν‖²) dν`.
pub fn grad_norm_sq(spec: &ProblemSpec, nu: &DiscreteMeasure, alpha: f64, beta: f64) -> Result<f64> {
    let field = spec.field(nu)?;
    let man = nu.manifold();
    let mut total = 0.0;
    for a in nu.atoms() {
        let mut g = vec![0.0; man.coord_len()];
        let v = field.value_grad(a.pos.coords(), a.sign, &mut g);
        total += a.mass * (4.0 * alpha * v * v + beta * norm(&g).powi(2));
    }
    Ok(total)
}

/// Uniform minibatch indices (with replacement) into the frozen sample.
pub fn draw_batch<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Vec<usize> {
    (0..batch).map(|_| rng.random_range(0..n)).collect()
}

/// Minibatch estimate of the residual on the batch samples, unscaled:
/// `ρ_b = Σ_a s_a w_a σ_{n_b}(θ_a) − √N f*_{n_b}`.
fn batch_residual(spec: &ProblemSpec, nu: &DiscreteMeasure, idx: &[usize]) -> Result<Vec<f64>> {
    let emp = spec
        .features()
        .as_empirical()
        .ok_or_else(|| Error::Unsupported("stochastic steps need an empirical-sample feature model".into()))?;
    let root_n = (emp.sample_count() as f64).sqrt();
    let mut rho: Vec<f64> = idx.iter().map(|&n| -root_n * spec.target()[n]).collect();
    let mut buf = vec![0.0; idx.len()];
    for a in nu.atoms() {
        emp.eval_samples(a.pos.coords(), idx, &mut buf);
        let w = a.weight();
        rho.iter_mut().zip(&buf).for_each(|(r, s)| *r += w * s);
    }
    Ok(rho)
}

fn stochastic_direction(
    spec: &ProblemSpec,
    ens: &ParticleEnsemble,
    idx: &[usize],
) -> Result<Direction> {
    let rho = batch_residual(spec, &ens.project(), idx)?;
    let emp = spec.features().as_empirical().expect("checked in batch_residual");
    let b = idx.len() as f64;
    let c: Vec<f64> = rho.iter().map(|r| r / b).collect();
    let coord_len = ens.manifold().coord_len();
    let lambda = spec.lambda();
    let (value, grad) = ens
        .particles()
        .par_iter()
        .map(|p| {
            let mut g = vec![0.0; coord_len];
            let v = emp.pair_grad_samples(p.pos.coords(), idx, &c, &mut g);
            let s = p.sign.value();
            g.iter_mut().for_each(|x| *x *= s);
            (s * v + lambda, g)
        })
        .unzip();
    Ok(Direction { value, grad })
}

/// Unbiased minibatch estimate of `J'_ν(θ)` on the copy selected by `sign`.
pub fn stochastic_first_variation(
    spec: &ProblemSpec,
    nu: &DiscreteMeasure,
    theta: &[f64],
    sign: Sign,
    idx: &[usize],
) -> Result<f64> {
    let rho = batch_residual(spec, nu, idx)?;
    let emp = spec.features().as_empirical().expect("checked in batch_residual");
    let mut s = vec![0.0; idx.len()];
    emp.eval_samples(theta, idx, &mut s);
    let est = rho.iter().zip(&s).map(|(r, x)| r * x).sum::<f64>() / idx.len() as f64;
    Ok(sign.value() * est + spec.lambda())
}

/// One stochastic step: the update of [`cpgd_step`] with `J'` and `∇J'`
/// replaced by minibatch estimates from `batch_size` uniform draws.
pub fn sgd_step<R: Rng + ?Sized>(
    spec: &ProblemSpec,
    ensemble: &ParticleEnsemble,
    alpha: f64,
    beta: f64,
    retraction: &dyn ConeRetraction,
    batch_size: usize,
    rng: &mut R,
) -> Result<ParticleEnsemble> {
    let n = spec
        .features()
        .as_empirical()
        .ok_or_else(|| Error::Unsupported("stochastic steps need an empirical-sample feature model".into()))?
        .sample_count();
    let idx = draw_batch(n, batch_size, rng);
    let dir = stochastic_direction(spec, ensemble, &idx)?;
    apply(ensemble, &dir, alpha, beta, retraction)
}

/// Extra per-row diagnostics for [`run`].
#[derive(Clone, Debug, Default)]
pub struct RunOptions<'a> {
    /// Points where `min J'_ν` is logged (both copies in signed problems).
    pub probe: &'a [Point],
    pub j_star: Option<f64>,
    /// Reference minimizer and cell radius for the transport upper bound.
    pub w2_reference: Option<(&'a DiscreteMeasure, f64)>,
    pub timing: bool,
    /// Record the ensemble every this many iterations and at the end.
    pub snapshot_every: Option<usize>,
}

struct State {
    ens: ParticleEnsemble,
    phis: Vec<Vec<f64>>,
    weights: Vec<f64>,
    residual: Vec<f64>,
    objective: f64,
}

fn build_state(spec: &ProblemSpec, ens: ParticleEnsemble, prev: Option<&State>) -> State {
    let k = spec.features();
    let dim = k.feature_dim();
    let phis: Vec<Vec<f64>> = ens
        .particles()
        .par_iter()
        .enumerate()
        .map(|(i, p)| match prev {
            Some(s) if s.ens.particles()[i].pos == p.pos => s.phis[i].clone(),
            _ => {
                let mut out = vec![0.0; dim];
                k.eval(p.pos.coords(), &mut out);
                out
            }
        })
        .collect();
    let weights = weights(&ens);
    let mut residual: Vec<f64> = spec.target().iter().map(|t| -t).collect();
    let mut mass = 0.0;
    for ((p, phi), w) in ens.particles().iter().zip(&phis).zip(&weights) {
        let sw = p.sign.value() * w;
        residual.iter_mut().zip(phi).for_each(|(r, x)| *r += sw * x);
        mass += w;
    }
    let objective = objective_from_residual(&residual, mass, spec.lambda());
    State {
        ens,
        phis,
        weights,
        residual,
        objective,
    }
}

/// `J(new) − J(old)` as `<Δf, res> + ½‖Δf‖² + λ Δmass` with per-particle
/// increments, which stays accurate when the change is far below `J`.
fn objective_increment(spec: &ProblemSpec, old: &State, new: &State) -> f64 {
    let mut df = vec![0.0; old.residual.len()];
    let mut dmass = 0.0;
    for i in 0..old.ens.m() {
        let s = old.ens.particles()[i].sign.value();
        let (w0, w1) = (old.weights[i], new.weights[i]);
        dmass += w1 - w0;
        if old.phis[i] == new.phis[i] {
            let dw = s * (w1 - w0);
            df.iter_mut().zip(&old.phis[i]).for_each(|(d, x)| *d += dw * x);
        } else {
            df.iter_mut()
                .zip(&old.phis[i])
                .zip(&new.phis[i])
                .for_each(|((d, a), b)| *d += s * (w1 * b - w0 * a));
        }
    }
    let lin: f64 = df.iter().zip(&old.residual).map(|(a, b)| a * b).sum();
    let quad: f64 = 0.5 * df.iter().map(|x| x * x).sum::<f64>();
    lin + quad + spec.lambda() * dmass
}

fn probe_min(field: &FirstVariation<'_>, probe: &[Point], signed: bool) -> Option<f64> {
    if probe.is_empty() {
        return None;
    }
    let signs: &[Sign] = if signed { &[Sign::Plus, Sign::Minus] } else { &[Sign::Plus] };
    Some(
        probe
            .par_iter()
            .map(|p| {
                signs
                    .iter()
                    .map(|&s| field.value(p.coords(), s))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .fold(f64::INFINITY, f64::min),
    )
}

/// Runs conic particle gradient descent (or its stochastic variant) and logs
/// one row per iteration plus a final row.
pub fn run(
    spec: &ProblemSpec,
    ensemble: ParticleEnsemble,
    config: &OptimizerConfig,
    opts: &RunOptions<'_>,
) -> Result<(ParticleEnsemble, Trajectory)> {
    config.validate()?;
    if ensemble.manifold() != spec.manifold() {
        return Err(invalid("ensemble and problem live on different manifolds"));
    }
    if !config.retraction.supports(&spec.manifold()) {
        return Err(Error::UnsupportedRetraction {
            retraction: config.retraction.name(),
        });
    }
    let start = Instant::now();
    let coord_len = spec.manifold().coord_len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sample_count = match &config.stochastic {
        Some(_) => Some(
            spec.features()
                .as_empirical()
                .ok_or_else(|| Error::Unsupported("stochastic runs need an empirical-sample feature model".into()))?
                .sample_count(),
        ),
        None => None,
    };

    let mut state = build_state(spec, ensemble, None);
    let mut traj = Trajectory::default();
    let mut shrink = 1.0f64;
    let mut k = 0usize;
    loop {
        let field = spec.field_from_residual(state.residual.clone());
        let full = full_direction(&field, state.ens.particles(), coord_len);
        let ramp = config.beta_ramp.as_ref().map_or(1.0, |r| r.factor(k));
        let mut alpha = config.alpha * shrink;
        let mut beta = config.beta * ramp * shrink;
        let gap = opts.j_star.map(|j| state.objective - j);
        let min_jp = probe_min(&field, opts.probe, spec.signed());
        let w2hat = match opts.w2_reference {
            Some((reference, tau)) => Some(cone_w2_upper(&state.ens.project(), reference, tau)?),
            None => None,
        };
        let g2 = grad_norm_sq_of(&state.weights, &full, alpha, beta);
        let last = k == config.iters || g2 <= config.stop_tol;
        if let Some(every) = opts.snapshot_every {
            if last || k.is_multiple_of(every.max(1)) {
                traj.snapshots.push((k, state.ens.clone()));
            }
        }

        if last {
            traj.push(TrajectoryRow {
                iter: k,
                objective: state.objective,
                gap,
                grad_norm_sq: g2,
                min_first_variation: min_jp,
                w2hat,
                wall_ms: opts.timing.then(|| start.elapsed().as_secs_f64() * 1e3),
                alpha,
                beta,
                delta_objective: None,
                halvings: 0,
            });
            break;
        }

        let stochastic = match (&config.stochastic, sample_count) {
            (Some(s), Some(n)) => {
                let idx = draw_batch(n, s.batch_size, &mut rng);
                Some(stochastic_direction(spec, &state.ens, &idx)?)
            }
            _ => None,
        };
        let dir = stochastic.as_ref().unwrap_or(&full);

        let mut halvings = 0u32;
        let (next, delta) = loop {
            let attempt = apply(&state.ens, dir, alpha, beta, &config.retraction);
            let rejected_detail = match attempt {
                Ok(ens) => {
                    let cand = build_state(spec, ens, Some(&state));
                    let delta = objective_increment(spec, &state, &cand);
                    let guard_on_increase = config.descent_guard && config.stochastic.is_none();
                    if guard_on_increase && !(delta <= 0.0) {
                        format!("objective change {delta:e}")
                    } else {
                        break (cand, delta);
                    }
                }
                Err(e @ (Error::StepTooLarge { .. } | Error::Degenerate(_))) if config.descent_guard => e.to_string(),
                Err(e) => return Err(e),
            };
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::NonDescent {
                    iter: k,
                    detail: format!(
                        "{rejected_detail}; J = {:e}, grad_norm_sq = {g2:e}, alpha = {alpha:e}, beta = {beta:e}",
                        state.objective
                    ),
                });
            }
            shrink *= 0.5;
            alpha *= 0.5;
            beta *= 0.5;
        };

        let g2_accepted = if halvings == 0 {
            g2
        } else {
            grad_norm_sq_of(&state.weights, &full, alpha, beta)
        };
        traj.push(TrajectoryRow {
            iter: k,
            objective: state.objective,
            gap,
            grad_norm_sq: g2_accepted,
            min_first_variation: min_jp,
            w2hat,
            wall_ms: opts.timing.then(|| start.elapsed().as_secs_f64() * 1e3),
            alpha,
            beta,
            delta_objective: Some(delta),
            halvings,
        });
        state = next;
        k += 1;
    }
    Ok((state.ens, traj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Manifold;
    use crate::optimize::baselines::{mirror_fixed_grid, FixedGridOptions};
    use crate::problem::{make_dirichlet_features, make_relu_hom_features, FeatureModel};
    use rand::SeedableRng;
    use std::sync::Arc;

    fn deconv(lambda: f64) -> ProblemSpec {
        let man = Manifold::torus(1);
        let teacher = DiscreteMeasure::new(
            man,
            vec![
                Atom::new(1.0, man.point(vec![0.5]).unwrap()),
                Atom::new(0.6, man.point(vec![2.5]).unwrap()),
            ],
        )
        .unwrap();
        ProblemSpec::new(Arc::new(make_dirichlet_features(1, 3).unwrap()), teacher, lambda, false).unwrap()
    }

    fn random_ensemble(man: Manifold, m: usize, seed: u64, signed: bool) -> ParticleEnsemble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut e = ParticleEnsemble::uniform_random(man, m, 1.0, signed, &mut rng).unwrap();
        for p in e.particles_mut() {
            p.r = rng.random_range(0.2..1.5);
        }
        e
    }

    #[test]
    fn zero_field_leaves_ensemble_unchanged() {
        let spec = deconv(0.0);
        let ens = ParticleEnsemble::lift(spec.teacher());
        for kind in [RetractionKind::Canonical, RetractionKind::Mirror] {
            let next = cpgd_step(&spec, &ens, 0.1, 0.1, &kind).unwrap();
            for (a, b) in ens.particles().iter().zip(next.particles()) {
                assert!((a.r - b.r).abs() < 1e-12);
                assert!(spec.manifold().dist_coords(a.pos.coords(), b.pos.coords()) < 1e-12);
            }
        }
    }

    #[test]
    fn mirror_mass_step_example() {
        // J' = 0.25/α at the particle: r' = r e^{-0.5}, mass times e^{-1}
        let spec = deconv(0.3);
        let man = spec.manifold();
        let ens = ParticleEnsemble::new(man, vec![ConeParticle::new(0.8, man.point(vec![1.7]).unwrap()).unwrap()])
            .unwrap();
        let jp = spec.first_variation(&ens.project(), &ens.particles()[0].pos).unwrap();
        let alpha = 0.25 / jp;
        let next = cpgd_step(&spec, &ens, alpha, 0.0, &RetractionKind::Mirror).unwrap();
        let r = next.particles()[0].r;
        assert!((r - 0.8 * (-0.5f64).exp()).abs() < 1e-14);
        assert!((next.project().total_mass() / ens.project().total_mass() - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn projected_update_commutes_for_every_retraction() {
        let spec = deconv(0.2);
        for kind in [RetractionKind::Canonical, RetractionKind::Mirror] {
            for seed in 0..20 {
                let ens = random_ensemble(spec.manifold(), 7, seed, false);
                let (a, b) = (0.01, 0.02);
                let lifted = cpgd_step(&spec, &ens, a, b, &kind).unwrap().project();
                let projected = projected_update(&spec, &ens.project(), a, b, &kind).unwrap();
                for (x, y) in lifted.atoms().iter().zip(projected.atoms()) {
                    assert!((x.mass - y.mass).abs() <= 1e-12 * (1.0 + x.mass));
                    assert!(spec.manifold().dist_coords(x.pos.coords(), y.pos.coords()) <= 1e-12);
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = Arc::new(make_relu_hom_features(3, 40, &mut rng).unwrap());
        let target: Vec<f64> = (0..f.feature_dim()).map(|_| rng.random_range(-0.2..0.2)).collect();
        let spec = ProblemSpec::from_target(f, target, 0.05, false).unwrap();
        let ens = random_ensemble(spec.manifold(), 6, 9, false);
        let lifted = cpgd_step(&spec, &ens, 0.05, 0.05, &RetractionKind::Induced).unwrap().project();
        let projected = projected_update(&spec, &ens.project(), 0.05, 0.05, &RetractionKind::Induced).unwrap();
        for (x, y) in lifted.atoms().iter().zip(projected.atoms()) {
            assert!((x.mass - y.mass).abs() <= 1e-12 * (1.0 + x.mass));
            assert!(spec.manifold().dist_coords(x.pos.coords(), y.pos.coords()) <= 1e-12);
        }
    }

    #[test]
    fn mirror_grid_matches_cpgd_without_position_steps() {
        let spec = deconv(0.2);
        let grid = ParticleEnsemble::grid(spec.manifold(), 16, 1.0, false).unwrap();
        let mut opts = FixedGridOptions::new(0.05, 25);
        opts.j_star = None;
        let (w, _) = mirror_fixed_grid(&spec, &grid.project(), &opts).unwrap();
        let mut ens = grid.clone();
        for _ in 0..25 {
            ens = cpgd_step(&spec, &ens, 0.05, 0.0, &RetractionKind::Mirror).unwrap();
        }
        for (a, b) in w.atoms().iter().zip(ens.project().atoms()) {
            assert!((a.mass - b.mass).abs() <= 1e-12);
        }
    }

    #[test]
    fn signs_and_apex_are_preserved() {
        let spec = deconv(0.1).lift_signed();
        let mut ens = random_ensemble(spec.manifold(), 6, 1, true);
        ens.particles_mut()[2].r = 0.0;
        let signs: Vec<Sign> = ens.particles().iter().map(|p| p.sign).collect();
        let pos2 = ens.particles()[2].pos.clone();
        for kind in [RetractionKind::Canonical, RetractionKind::Mirror] {
            let mut e = ens.clone();
            for _ in 0..20 {
                e = cpgd_step(&spec, &e, 0.01, 0.01, &kind).unwrap();
            }
            assert_eq!(e.particles().iter().map(|p| p.sign).collect::<Vec<_>>(), signs);
            assert_eq!(e.particles()[2].r, 0.0);
            assert_eq!(e.particles()[2].pos, pos2);
        }
    }

    #[test]
    fn stochastic_first_variation_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = Arc::new(make_relu_hom_features(4, 200, &mut rng).unwrap());
        let man = f.manifold();
        let teacher = DiscreteMeasure::new(man, vec![Atom::new(1.0, man.sample_uniform(&mut rng))]).unwrap();
        let spec = ProblemSpec::new(f, teacher, 0.1, false).unwrap();
        let nu = random_ensemble(man, 5, 2, false).project();
        let theta = man.sample_uniform(&mut rng);
        let exact = spec.first_variation(&nu, &theta).unwrap();
        let draws: Vec<f64> = (0..4000)
            .map(|_| {
                let idx = draw_batch(200, 8, &mut rng);
                stochastic_first_variation(&spec, &nu, theta.coords(), Sign::Plus, &idx).unwrap()
            })
            .collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - exact).abs() < 3.0 * sd / n.sqrt(), "{mean} vs {exact}");
    }

    #[test]
    fn grad_norm_sq_is_linear_in_steps() {
        let spec = deconv(0.2);
        let nu = random_ensemble(spec.manifold(), 5, 4, false).project();
        let g = grad_norm_sq(&spec, &nu, 0.3, 0.7).unwrap();
        let g3 = grad_norm_sq(&spec, &nu, 0.9, 2.1).unwrap();
        assert!((g3 - 3.0 * g).abs() <= 1e-12 * g3);
        let a = &nu.atoms()[0];
        let single = DiscreteMeasure::new(spec.manifold(), vec![a.clone()]).unwrap();
        let v = spec.first_variation(&single, &a.pos).unwrap();
        let gv = spec.grad_first_variation(&single, &a.pos).unwrap();
        let hand = a.mass * (4.0 * 0.3 * v * v + 0.7 * gv.norm().powi(2));
        assert!((grad_norm_sq(&spec, &single, 0.3, 0.7).unwrap() - hand).abs() <= 1e-14 * hand);
        assert!(grad_norm_sq(&deconv(0.0), deconv(0.0).teacher(), 1.0, 1.0).unwrap() < 1e-24);
    }

    #[test]
    fn run_with_zero_iterations_logs_one_row() {
        let spec = deconv(0.2);
        let ens = ParticleEnsemble::grid(spec.manifold(), 10, 1.0, false).unwrap();
        let cfg = OptimizerConfig {
            iters: 0,
            ..Default::default()
        };
        let (out, traj) = run(&spec, ens.clone(), &cfg, &RunOptions::default()).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(out, ens);
        assert_eq!(traj.rows[0].delta_objective, None);
    }

    #[test]
    fn run_is_deterministic_and_descends() {
        let spec = deconv(0.2);
        let ens = ParticleEnsemble::grid(spec.manifold(), 12, 1.0, false).unwrap();
        let cfg = OptimizerConfig {
            alpha: 0.05,
            beta: 0.05,
            iters: 200,
            ..Default::default()
        };
        let (a, ta) = run(&spec, ens.clone(), &cfg, &RunOptions::default()).unwrap();
        let (b, tb) = run(&spec, ens, &cfg, &RunOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        for r in &ta.rows[..ta.len() - 1] {
            assert!(r.delta_objective.unwrap() <= 0.0);
        }
    }

    #[test]
    fn guard_halves_oversized_canonical_steps() {
        let spec = deconv(0.2);
        let ens = ParticleEnsemble::grid(spec.manifold(), 8, 4.0, false).unwrap();
        let cfg = OptimizerConfig {
            alpha: 5.0,
            beta: 0.0,
            retraction: RetractionKind::Canonical,
            iters: 5,
            ..Default::default()
        };
        let (_, traj) = run(&spec, ens.clone(), &cfg, &RunOptions::default()).unwrap();
        assert!(traj.rows[0].halvings > 0);
        assert!(traj.rows[0].alpha < 5.0);
        let off = OptimizerConfig {
            descent_guard: false,
            ..cfg
        };
        assert!(matches!(
            run(&spec, ens, &off, &RunOptions::default()),
            Err(Error::StepTooLarge { .. })
        ));
    }
}
