#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use meopt::cone::Sign;
use meopt::harness::{solve_oracle, AtomRecord, ExperimentConfig, InitKind, OracleReport, SweepAxes, SweepConfig};

/// The three-spike 1D problem: n_f = 8, λ = 0.2, 100 grid particles,
/// mirror retraction, α = β = 0.01, descent guard on.
pub fn three_spike(lambda: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.problem.lambda = lambda;
    cfg.optimizer.iters = 5000;
    cfg.diagnostics.probe_grid_size = 0;
    cfg
}

pub fn oracle_for(lambda: f64) -> &'static OracleReport {
    static CACHE: OnceLock<Mutex<Vec<(u64, &'static OracleReport)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(Vec::new()));
    let mut c = cache.lock().unwrap();
    if let Some((_, r)) = c.iter().find(|(k, _)| *k == lambda.to_bits()) {
        return r;
    }
    let report: &'static OracleReport = Box::leak(Box::new(solve_oracle(&three_spike(lambda)).unwrap()));
    c.push((lambda.to_bits(), report));
    report
}

/// Single spike on a grid point of the 100-point grid.
pub fn compare_1d() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.problem.teacher = vec![AtomRecord {
        mass: 1.0,
        pos: vec![0.6 * PI],
        sign: Sign::Plus,
    }];
    cfg.optimizer.iters = 1000;
    cfg.oracle.max_iters = 5000;
    cfg
}

/// 10 × 10 grid, single spike on a grid point, n_f = 1.
pub fn compare_2d() -> ExperimentConfig {
    let mut cfg = compare_1d();
    cfg.problem.kind = meopt::harness::ProblemKind::Deconv2d;
    cfg.problem.n_f = 1;
    cfg.problem.teacher = vec![AtomRecord {
        mass: 1.0,
        pos: vec![0.6 * PI, 1.2 * PI],
        sign: Sign::Plus,
    }];
    cfg.oracle.grid_size = 10_000;
    cfg
}

pub fn signed_three_spike() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.problem.signed = true;
    cfg.problem.lambda = 0.1;
    cfg.problem.teacher = [(0.7, 1.0, Sign::Plus), (0.6, 2.8, Sign::Minus), (0.8, 4.6, Sign::Plus)]
        .into_iter()
        .map(|(mass, x, sign)| AtomRecord { mass, pos: vec![x], sign })
        .collect();
    cfg.optimizer.iters = 5000;
    cfg.diagnostics.probe_grid_size = 0;
    cfg
}

/// Five spikes, n_f = 10, λ = 0.1, random initializations, β/α = 1.
pub fn five_spike_sweep() -> SweepConfig {
    let mut base = ExperimentConfig::default();
    base.problem.n_f = 10;
    base.problem.lambda = 0.1;
    base.problem.teacher = [(0.8, 0.5), (0.6, 1.6), (1.0, 2.9), (0.7, 4.1), (0.9, 5.3)]
        .into_iter()
        .map(|(mass, x)| AtomRecord {
            mass,
            pos: vec![x],
            sign: Sign::Plus,
        })
        .collect();
    base.init.kind = InitKind::UniformRandom;
    base.optimizer.iters = 3000;
    base.diagnostics.probe_grid_size = 0;
    SweepConfig {
        base,
        axes: SweepAxes {
            m: Some(vec![4, 8, 16, 32, 64]),
            beta_over_alpha: Some(vec![1.0]),
            lambda: None,
        },
        repeats: 5,
        ..Default::default()
    }
}

pub fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

pub fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}
