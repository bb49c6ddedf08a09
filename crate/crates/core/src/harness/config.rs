//! JSON experiment configuration. Every field has a default, so `{}` is a
//! valid config (1D deconvolution with a three-spike teacher).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cone::Sign;
use crate::error::{Error, Result};
use crate::manifold::{Manifold, ManifoldKind, Point};
use crate::optimize::{OptimizerConfig, ParticleEnsemble};
use crate::problem::{
    generic_scalar_problem, make_dirichlet_features, make_relu_hom_features, make_scalar_features, Atom,
    DiscreteMeasure, ProblemSpec, ScalarFunction, ScalarSource,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Deconv1d,
    Deconv2d,
    ReluNet,
    GenericScalar,
}

/// One teacher atom. `sign` is `1` or `-1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomRecord {
    pub mass: f64,
    pub pos: Vec<f64>,
    #[serde(default)]
    pub sign: Sign,
}

impl AtomRecord {
    pub fn from_atom(a: &Atom) -> Self {
        Self {
            mass: a.mass,
            pos: a.pos.coords().to_vec(),
            sign: a.sign,
        }
    }
}

pub fn measure_from_records(manifold: Manifold, atoms: &[AtomRecord]) -> Result<DiscreteMeasure> {
    let atoms = atoms
        .iter()
        .map(|a| Ok(Atom::signed(a.mass, manifold.point_normalized(a.pos.clone())?, a.sign)))
        .collect::<Result<Vec<_>>>()?;
    DiscreteMeasure::new(manifold, atoms)
}

pub fn records_from_measure(nu: &DiscreteMeasure) -> Vec<AtomRecord> {
    nu.atoms().iter().map(AtomRecord::from_atom).collect()
}

/// `count` teacher atoms of mass `mass` at uniform random positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomTeacher {
    pub count: usize,
    pub mass: f64,
    pub seed: u64,
}

impl Default for RandomTeacher {
    fn default() -> Self {
        Self {
            count: 5,
            mass: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// Dirichlet frequency cutoff (deconvolution).
    pub n_f: usize,
    /// `d + 1` for `relu_net`.
    pub ambient_dim: usize,
    pub teacher: Vec<AtomRecord>,
    /// Replaces `teacher` when present.
    pub random_teacher: Option<RandomTeacher>,
    pub lambda: f64,
    pub signed: bool,
    /// Input sample size for `relu_net`.
    pub data_sample_size: usize,
    pub data_seed: u64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            kind: ProblemKind::Deconv1d,
            n_f: 8,
            ambient_dim: 20,
            teacher: vec![
                AtomRecord {
                    mass: 0.6,
                    pos: vec![1.0],
                    sign: Sign::Plus,
                },
                AtomRecord {
                    mass: 0.5,
                    pos: vec![2.6],
                    sign: Sign::Plus,
                },
                AtomRecord {
                    mass: 0.8,
                    pos: vec![4.6],
                    sign: Sign::Plus,
                },
            ],
            random_teacher: None,
            lambda: 0.2,
            signed: false,
            data_sample_size: 1000,
            data_seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Grid,
    UniformRandom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub kind: InitKind,
    pub m: usize,
    pub total_mass: f64,
    pub seed: u64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            kind: InitKind::Grid,
            m: 100,
            total_mass: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Cell radius; `None` uses half the minimal spike separation, capped at 1.
    pub tau: Option<f64>,
    /// Total number of probe points for `min_Jprime` and the certificate.
    pub probe_grid_size: usize,
    pub certificate_tol: f64,
    /// Oracle output enabling the `gap` and `w2hat` columns.
    pub oracle_path: Option<PathBuf>,
    /// Checkpoint read by `diagnose`.
    pub checkpoint_path: Option<PathBuf>,
    /// Fraction of logged rows at the end of the run used for rate fits.
    pub rate_tail_fraction: f64,
    /// Geometric constant of the mirror rate bound.
    pub c_theta: f64,
    /// Lipschitz constant of the prior log-density (0 for the uniform prior).
    pub prior_log_lipschitz: f64,
    /// Horizon `τ` of the mirror rate bound.
    pub mirror_rate_tau: f64,
    /// Fill the `wall_ms` column (breaks byte-identical output).
    pub timing: bool,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            tau: None,
            probe_grid_size: 2000,
            certificate_tol: 1e-5,
            oracle_path: None,
            checkpoint_path: None,
            rate_tail_fraction: 0.3,
            c_theta: 1.0,
            prior_log_lipschitz: 0.0,
            mirror_rate_tau: 100.0,
            timing: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub grid_size: usize,
    /// Stop the grid solve once `‖g‖² ≤ tol`.
    pub tol: f64,
    pub max_iters: usize,
    /// Mirror step on the grid; `None` picks `1/(4 k_max M)` with `M` the
    /// teacher mass.
    pub alpha: Option<f64>,
    /// Refine the grid solution off the grid by Newton's method on the
    /// stationarity conditions.
    pub polish: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid_size: 2000,
            tol: 1e-12,
            max_iters: 20_000,
            alpha: None,
            polish: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// ISTA step; `None` uses `1/L` with `L` the largest eigenvalue of the
    /// grid Gram matrix.
    pub ista_step: Option<f64>,
    /// Mirror step; `None` uses `1/(4 M k_max)` with `M` the larger of the
    /// initial and teacher masses.
    pub mirror_alpha: Option<f64>,
    /// Iteration window of the mirror power-law fit.
    pub fit_window: (usize, usize),
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            ista_step: None,
            mirror_alpha: None,
            fit_window: (100, 1000),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write `particles.csv` with the ensemble every this many iterations.
    pub particle_stride: Option<usize>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            particle_stride: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub init: InitConfig,
    pub optimizer: OptimizerConfig,
    pub diagnostics: DiagnosticsConfig,
    pub oracle: OracleConfig,
    pub compare: CompareConfig,
    pub output: OutputConfig,
}

/// Referenced files a command reads.
#[derive(Clone, Copy, Debug)]
pub struct Reads {
    pub oracle: bool,
    pub checkpoint: bool,
}

impl Reads {
    pub const ALL: Reads = Reads {
        oracle: true,
        checkpoint: true,
    };
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Like [`load`](Self::load), but only requires the referenced files the
    /// command reads; `oracle` and `run` write the others.
    pub fn load_reading(path: &Path, reads: Reads) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate_ranges()?;
        cfg.check_files(reads)?;
        Ok(cfg)
    }

    /// Checks ranges and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        self.validate_ranges()?;
        self.check_files(Reads::ALL)
    }

    fn check_files(&self, reads: Reads) -> Result<()> {
        let d = &self.diagnostics;
        let paths = [
            d.oracle_path.as_ref().filter(|_| reads.oracle),
            d.checkpoint_path.as_ref().filter(|_| reads.checkpoint),
        ];
        for path in paths.into_iter().flatten() {
            if !path.exists() {
                return Err(Error::Config(format!("referenced file {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    fn validate_ranges(&self) -> Result<()> {
        let p = &self.problem;
        if !(p.lambda >= 0.0 && p.lambda.is_finite()) {
            return Err(Error::Config(format!("problem.lambda must be >= 0, got {}", p.lambda)));
        }
        if self.init.m < 1 {
            return Err(Error::Config("init.m must be at least 1".into()));
        }
        if !(self.init.total_mass > 0.0 && self.init.total_mass.is_finite()) {
            return Err(Error::Config("init.total_mass must be positive".into()));
        }
        if self.output.particle_stride == Some(0) {
            return Err(Error::Config("output.particle_stride must be at least 1".into()));
        }
        let f = self.diagnostics.rate_tail_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config("diagnostics.rate_tail_fraction must lie in (0, 1]".into()));
        }
        self.optimizer.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Overrides the init and optimizer seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.init.seed = seed;
        self.optimizer.seed = seed;
        self
    }

    pub fn manifold(&self) -> Manifold {
        match self.problem.kind {
            ProblemKind::Deconv1d | ProblemKind::GenericScalar => Manifold::torus(1),
            ProblemKind::Deconv2d => Manifold::torus(2),
            ProblemKind::ReluNet => Manifold::sphere(self.problem.ambient_dim.max(2) - 1),
        }
    }

    pub fn teacher(&self) -> Result<DiscreteMeasure> {
        let man = self.manifold();
        match &self.problem.random_teacher {
            Some(t) => {
                let mut rng = ChaCha8Rng::seed_from_u64(t.seed);
                let atoms = (0..t.count)
                    .map(|i| {
                        let sign = if self.problem.signed && i % 2 == 1 { Sign::Minus } else { Sign::Plus };
                        Atom::signed(t.mass, man.sample_uniform(&mut rng), sign)
                    })
                    .collect();
                DiscreteMeasure::new(man, atoms)
            }
            None => measure_from_records(man, &self.problem.teacher),
        }
    }

    pub fn build_problem(&self) -> Result<ProblemSpec> {
        let p = &self.problem;
        let spec = match p.kind {
            ProblemKind::Deconv1d | ProblemKind::Deconv2d => {
                let feats = make_dirichlet_features(self.manifold().dim, p.n_f)?;
                ProblemSpec::new(Arc::new(feats), self.teacher()?, p.lambda, p.signed)?
            }
            ProblemKind::ReluNet => {
                let mut rng = ChaCha8Rng::seed_from_u64(p.data_seed);
                let feats = make_relu_hom_features(p.ambient_dim, p.data_sample_size, &mut rng)?;
                ProblemSpec::new(Arc::new(feats), self.teacher()?, p.lambda, p.signed)?
            }
            ProblemKind::GenericScalar => {
                let phi = make_scalar_features(ScalarSource::Closed(ScalarFunction::Cos))?;
                generic_scalar_problem(phi, p.lambda)?
            }
        };
        Ok(spec)
    }

    pub fn build_init(&self) -> Result<ParticleEnsemble> {
        let man = self.manifold();
        let i = &self.init;
        let signed = self.problem.signed;
        match i.kind {
            InitKind::Grid => ParticleEnsemble::grid(man, i.m, i.total_mass, signed),
            InitKind::UniformRandom => {
                let mut rng = ChaCha8Rng::seed_from_u64(i.seed);
                ParticleEnsemble::uniform_random(man, i.m, i.total_mass, signed, &mut rng)
            }
        }
    }

    /// About `probe_grid_size` points; empty off the torus.
    pub fn probe_points(&self) -> Result<Vec<Point>> {
        let man = self.manifold();
        if man.kind != ManifoldKind::Torus || self.diagnostics.probe_grid_size == 0 {
            return Ok(Vec::new());
        }
        Ok(man.uniform_grid(self.diagnostics.probe_grid_size)?.points)
    }

    /// Per-axis scan density with about `probe_grid_size` points in total.
    pub fn certificate_grid_per_axis(&self) -> usize {
        let d = self.manifold().dim as f64;
        ((self.diagnostics.probe_grid_size.max(1) as f64).powf(1.0 / d).ceil() as usize).max(1)
    }
}

/// Parameter sweep over `m`, `β/α` and `λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub axes: SweepAxes,
    pub repeats: usize,
    pub success_threshold: f64,
    pub base_seed: u64,
}

/// An empty axis is rejected; omitted axes take the base config value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub m: Option<Vec<usize>>,
    pub beta_over_alpha: Option<Vec<f64>>,
    pub lambda: Option<Vec<f64>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            base: ExperimentConfig::default(),
            axes: SweepAxes::default(),
            repeats: 5,
            success_threshold: 1e-3,
            base_seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.repeats < 1 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        let empty = [
            self.axes.m.as_ref().is_some_and(|v| v.is_empty()),
            self.axes.beta_over_alpha.as_ref().is_some_and(|v| v.is_empty()),
            self.axes.lambda.as_ref().is_some_and(|v| v.is_empty()),
        ];
        if empty.iter().any(|&e| e) {
            return Err(Error::Config("sweep axes must be non-empty".into()));
        }
        Ok(())
    }

    pub fn m_values(&self) -> Vec<usize> {
        self.axes.m.clone().unwrap_or_else(|| vec![self.base.init.m])
    }

    pub fn ratio_values(&self) -> Vec<f64> {
        let o = &self.base.optimizer;
        self.axes.beta_over_alpha.clone().unwrap_or_else(|| vec![o.beta / o.alpha])
    }

    pub fn lambda_values(&self) -> Vec<f64> {
        self.axes.lambda.clone().unwrap_or_else(|| vec![self.base.problem.lambda])
    }
}

pub(crate) fn require_exact_kernel(cfg: &ExperimentConfig) -> Result<()> {
    match cfg.problem.kind {
        ProblemKind::ReluNet => Err(Error::Unsupported(
            "the oracle needs an exact-kernel problem (deconvolution or generic_scalar)".into(),
        )),
        _ => Ok(()),
    }
}
