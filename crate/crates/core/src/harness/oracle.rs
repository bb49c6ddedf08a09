//! Fine-grid convex oracle for `ν*` and `J*`.
//!
//! The measure restricted to a uniform grid is solved with multiplicative
//! mirror descent; the clustered grid solution then seeds a Newton solve of
//! `J'(θ_i) = 0, ∇J'(θ_i) = 0` over off-grid masses and positions.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cone::Sign;
use crate::error::{Error, Result};
use crate::harness::config::{
    measure_from_records, records_from_measure, require_exact_kernel, AtomRecord, ExperimentConfig,
};
use crate::manifold::{Manifold, ManifoldKind};
use crate::optimize::{mirror_fixed_grid, FixedGridOptions};
use crate::problem::{certify_optimality, Atom, CertificateOptions, DiscreteMeasure, ProblemSpec};

/// Atoms lighter than this are dropped from the grid solution.
pub const PRUNE_MASS: f64 = 1e-10;
/// Atoms closer than this are merged.
pub const MERGE_DIST: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub j_star: f64,
    pub atoms: Vec<AtomRecord>,
    pub lambda: f64,
    pub grid_size: usize,
    pub grid_iters: usize,
    pub grid_objective: f64,
    pub grid_grad_norm_sq: f64,
    /// Whether the Newton refinement was accepted.
    pub polished: bool,
    /// `max_i max(|J'(θ_i)|, |∇J'(θ_i)|)` over the reported atoms.
    pub stationarity: f64,
    /// `min J'` over the certificate scan.
    pub min_grid_jprime: f64,
    /// `−min(0, min J') · (J(0)/λ)`, a bound on `J(ν̂) − J*`; `null` at λ = 0.
    pub cert_gap: Option<f64>,
    pub certificate_pass: bool,
    pub certificate_tol: f64,
}

impl OracleReport {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn measure(&self, manifold: Manifold) -> Result<DiscreteMeasure> {
        measure_from_records(manifold, &self.atoms)
    }
}

/// Sums atoms of equal sign that lie within `dist` of an earlier atom.
pub fn merge_close(nu: &DiscreteMeasure, dist: f64) -> Result<DiscreteMeasure> {
    let man = nu.manifold();
    let mut out: Vec<Atom> = Vec::new();
    for a in nu.atoms() {
        match out
            .iter_mut()
            .find(|b| b.sign == a.sign && man.geodesic_dist(&b.pos, &a.pos).is_ok_and(|d| d < dist))
        {
            Some(b) => b.mass += a.mass,
            None => out.push(a.clone()),
        }
    }
    DiscreteMeasure::new(man, out)
}

fn grid_measure(spec: &ProblemSpec, grid_size: usize, total_mass: f64) -> Result<DiscreteMeasure> {
    let man = spec.manifold();
    let points = man.uniform_grid(grid_size)?.points;
    let signs: &[Sign] = if spec.signed() { &[Sign::Plus, Sign::Minus] } else { &[Sign::Plus] };
    let w = total_mass / (points.len() * signs.len()) as f64;
    let atoms = signs
        .iter()
        .flat_map(|&s| points.iter().map(move |p| Atom::signed(w, p.clone(), s)))
        .collect();
    DiscreteMeasure::new(man, atoms)
}

/// Single-linkage clusters of same-sign atoms heavier than `floor`, reduced
/// to one atom each (summed mass, mass-weighted mean in normal coordinates
/// around the heaviest member).
fn cluster(nu: &DiscreteMeasure, link: f64, floor: f64) -> Result<Vec<Atom>> {
    let man = nu.manifold();
    let heavy: Vec<&Atom> = nu.atoms().iter().filter(|a| a.mass >= floor).collect();
    let mut label: Vec<usize> = (0..heavy.len()).collect();
    fn root(label: &mut [usize], mut i: usize) -> usize {
        while label[i] != i {
            label[i] = label[label[i]];
            i = label[i];
        }
        i
    }
    for i in 0..heavy.len() {
        for j in i + 1..heavy.len() {
            if heavy[i].sign == heavy[j].sign && man.geodesic_dist(&heavy[i].pos, &heavy[j].pos)? < link {
                let (a, b) = (root(&mut label, i), root(&mut label, j));
                label[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<&Atom>> = Vec::new();
    let mut index = std::collections::BTreeMap::new();
    for (i, a) in heavy.iter().enumerate() {
        let r = root(&mut label, i);
        let g = *index.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(*a);
    }
    groups
        .into_iter()
        .map(|g| {
            let center = g.iter().max_by(|a, b| a.mass.total_cmp(&b.mass)).expect("non-empty cluster");
            let mass: f64 = g.iter().map(|a| a.mass).sum();
            let mut mean = vec![0.0; man.dim];
            for a in &g {
                let x = man.normal_coords(&center.pos, &a.pos)?;
                mean.iter_mut().zip(&x).for_each(|(m, xi)| *m += a.mass * xi / mass);
            }
            let c = center.pos.coords();
            let pos = man.point(man.exp_coords(c, &man.from_frame(c, &mean)))?;
            Ok(Atom::signed(mass, pos, center.sign))
        })
        .collect()
}

/// Stationarity residual `(J'(θ_i), ∇J'(θ_i))_i` stacked per atom.
fn stationarity_residual(spec: &ProblemSpec, nu: &DiscreteMeasure) -> Result<Vec<f64>> {
    let field = spec.field(nu)?;
    let mut out = Vec::new();
    for a in nu.atoms() {
        let mut g = vec![0.0; nu.manifold().coord_len()];
        out.push(field.value_grad(a.pos.coords(), a.sign, &mut g));
        out.extend(g);
    }
    Ok(out)
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton's method on the first-order conditions; torus only.
fn newton_polish(spec: &ProblemSpec, start: Vec<Atom>) -> Result<Option<DiscreteMeasure>> {
    let man = spec.manifold();
    let d = man.dim;
    let n = 1 + d;
    let feats = spec.features();
    let mut nu = DiscreteMeasure::new(man, start)?;
    let mut r = stationarity_residual(spec, &nu)?;
    for _ in 0..100 {
        if sup_norm(&r) < 1e-13 {
            break;
        }
        let atoms = nu.atoms();
        let size = atoms.len() * n;
        let field = spec.field(&nu)?;
        let mut jac = DMatrix::<f64>::zeros(size, size);
        for (i, a) in atoms.iter().enumerate() {
            let pa = a.pos.coords();
            for (j, b) in atoms.iter().enumerate() {
                let pb = b.pos.coords();
                let ss = a.sign.value() * b.sign.value();
                jac[(i * n, j * n)] = ss * feats.kernel(pa, pb);
                let gj = feats.grad1_kernel(pb, pa);
                let gi = feats.grad1_kernel(pa, pb);
                let cross = feats.cross_kernel(pa, pb);
                for k in 0..d {
                    jac[(i * n, j * n + 1 + k)] = ss * b.mass * gj[k];
                    jac[(i * n + 1 + k, j * n)] = ss * gi[k];
                    for l in 0..d {
                        jac[(i * n + 1 + k, j * n + 1 + l)] = ss * b.mass * cross[(k, l)];
                    }
                }
            }
            let (_, g, h) = field.hess(pa, a.sign);
            for k in 0..d {
                jac[(i * n, i * n + 1 + k)] += g[k];
                for l in 0..d {
                    jac[(i * n + 1 + k, i * n + 1 + l)] += h[(k, l)];
                }
            }
        }
        let Some(step) = jac.lu().solve(&-DVector::from_vec(r.clone())) else {
            return Ok(None);
        };
        let base = sup_norm(&r);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<Atom> = atoms
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let coords: Vec<f64> =
                        a.pos.coords().iter().enumerate().map(|(k, c)| c + t * step[i * n + 1 + k]).collect();
                    Ok(Atom::signed(a.mass + t * step[i * n], man.point(coords)?, a.sign))
                })
                .collect::<Result<_>>()?;
            if cand.iter().all(|a| a.mass > 0.0) {
                let cand = DiscreteMeasure::new(man, cand)?;
                let rc = stationarity_residual(spec, &cand)?;
                if sup_norm(&rc) < base {
                    accepted = Some((cand, rc));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, rc)) => {
                nu = cand;
                r = rc;
            }
            None => break,
        }
    }
    Ok((sup_norm(&r) < 1e-10).then_some(nu))
}

pub fn solve_oracle(cfg: &ExperimentConfig) -> Result<OracleReport> {
    require_exact_kernel(cfg)?;
    let spec = cfg.build_problem()?;
    let man = spec.manifold();
    if man.kind != ManifoldKind::Torus {
        return Err(Error::Unsupported("the oracle needs a torus parameter space".into()));
    }
    let o = &cfg.oracle;
    let teacher_mass = spec.teacher().total_mass();
    let mass0 = if teacher_mass > 0.0 { teacher_mass } else { cfg.init.total_mass };
    let grid = grid_measure(&spec, o.grid_size, mass0)?;
    let alpha = match o.alpha {
        Some(a) => a,
        None => {
            let k_max = grid
                .atoms()
                .iter()
                .map(|a| spec.features().kernel(a.pos.coords(), a.pos.coords()))
                .fold(0.0, f64::max);
            0.25 / (k_max * mass0.max(1.0))
        }
    };
    let mut opts = FixedGridOptions::new(alpha, o.max_iters);
    opts.stop_tol = o.tol;
    let (grid_nu, traj) = mirror_fixed_grid(&spec, &grid, &opts)?;
    let last = traj.last().expect("non-empty trajectory");
    let grid_objective = last.objective;
    let grid_sol = merge_close(&grid_nu.pruned(PRUNE_MASS), MERGE_DIST)?;

    let mut best = grid_sol.clone();
    let mut polished = false;
    if o.polish && !grid_sol.is_empty() {
        let spacing = std::f64::consts::TAU / (o.grid_size as f64).powf(1.0 / man.dim as f64);
        let max_mass = grid_sol.atoms().iter().map(|a| a.mass).fold(0.0, f64::max);
        let mut seeds = cluster(&grid_sol, 5.0 * spacing * (man.dim as f64).sqrt(), 1e-4 * max_mass)?;
        while !seeds.is_empty() {
            if let Some(nu) = newton_polish(&spec, seeds.clone())? {
                let nu = merge_close(&nu.pruned(PRUNE_MASS), MERGE_DIST)?;
                if spec.objective(&nu)? <= grid_objective + 1e-12 * (1.0 + grid_objective.abs()) {
                    best = nu;
                    polished = true;
                    break;
                }
            }
            // a spurious cluster keeps Newton from converging; drop the lightest
            let lightest = (0..seeds.len()).min_by(|&a, &b| seeds[a].mass.total_cmp(&seeds[b].mass)).unwrap();
            seeds.remove(lightest);
        }
    }

    let j_star = spec.objective(&best)?;
    let cert_tol = cfg.diagnostics.certificate_tol.min(1e-6);
    let cert = certify_optimality(
        &spec,
        &best,
        &CertificateOptions {
            grid_per_axis: cfg.certificate_grid_per_axis(),
            tol: cert_tol,
            mass_tol: None,
        },
    )?;
    let lambda = spec.lambda();
    let zero_objective = spec.objective(&DiscreteMeasure::empty(man))?;
    Ok(OracleReport {
        j_star,
        atoms: records_from_measure(&best),
        lambda,
        grid_size: o.grid_size,
        grid_iters: last.iter,
        grid_objective,
        grid_grad_norm_sq: last.grad_norm_sq,
        polished,
        stationarity: sup_norm(&stationarity_residual(&spec, &best)?),
        min_grid_jprime: cert.grid_min,
        cert_gap: (lambda > 0.0).then(|| -cert.grid_min.min(0.0) * zero_objective / lambda),
        certificate_pass: cert.pass,
        certificate_tol: cert_tol,
    })
}
