//! Two-layer ReLU network in the teacher-student setting, trained by
//! mini-batch conic particle SGD on the sphere with the induced retraction.

use meopt::cone::RetractionKind;
use meopt::harness::{execute_run, ExperimentConfig, InitKind, ProblemKind, RandomTeacher};
use meopt::optimize::StochasticConfig;

fn main() -> meopt::error::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.problem.kind = ProblemKind::ReluNet;
    cfg.problem.ambient_dim = 20;
    cfg.problem.lambda = 0.0;
    cfg.problem.random_teacher = Some(RandomTeacher { count: 5, mass: 0.2, seed: 7 });
    cfg.init.kind = InitKind::UniformRandom;
    cfg.init.m = 50;
    cfg.optimizer.alpha = 0.2;
    cfg.optimizer.beta = 0.2;
    cfg.optimizer.retraction = RetractionKind::Induced;
    cfg.optimizer.iters = 2000;
    cfg.optimizer.stochastic = Some(StochasticConfig { batch_size: 32 });
    cfg.diagnostics.probe_grid_size = 0;

    for seed in 0..3 {
        let out = execute_run(&cfg.clone().with_seed(seed), None)?;
        let first = out.trajectory.rows[0].objective;
        let last = out.summary.final_objective;
        println!("seed {seed}: loss {first:.3e} -> {last:.3e} (ratio {:.3})", last / first);
    }
    Ok(())
}
