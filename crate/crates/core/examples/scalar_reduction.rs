//! A problem with a scalar feature `φ = cos`: the minimizer is a single atom
//! at the minimum of `φ` with mass `(−2φ* − λ)/φ*²`.

use meopt::harness::{execute_run, ExperimentConfig, ProblemKind};
use meopt::problem::generic_optimal_mass;

fn main() -> meopt::error::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.problem.kind = ProblemKind::GenericScalar;
    cfg.problem.lambda = 0.5;
    cfg.optimizer.alpha = 0.05;
    cfg.optimizer.beta = 0.05;
    cfg.optimizer.iters = 3000;

    let out = execute_run(&cfg, None)?;
    let far: f64 = out
        .measure
        .atoms()
        .iter()
        .filter(|a| (a.pos.coords()[0] - std::f64::consts::PI).abs() > 1e-2)
        .map(|a| a.mass)
        .sum();
    println!("mass {:.12} (closed form {})", out.measure.total_mass(), generic_optimal_mass(-1.0, 0.5));
    println!("mass farther than 1e-2 from pi: {far:.3e}");
    Ok(())
}
