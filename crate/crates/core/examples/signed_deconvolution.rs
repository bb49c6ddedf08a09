//! Signed measures through the doubled formulation: half the particles carry
//! a negative sign, which never changes during optimization.

use meopt::harness::{execute_run, AtomRecord, ExperimentConfig};
use meopt::cone::Sign;

fn main() -> meopt::error::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.problem.signed = true;
    cfg.problem.lambda = 0.1;
    cfg.problem.teacher = vec![
        AtomRecord { mass: 0.7, pos: vec![1.0], sign: Sign::Plus },
        AtomRecord { mass: 0.6, pos: vec![2.8], sign: Sign::Minus },
        AtomRecord { mass: 0.8, pos: vec![4.6], sign: Sign::Plus },
    ];
    cfg.optimizer.iters = 5000;
    cfg.diagnostics.probe_grid_size = 500;

    let out = execute_run(&cfg, None)?;
    println!("final J = {:.10}", out.summary.final_objective);
    let man = out.measure.manifold();
    for t in cfg.teacher()?.atoms() {
        let near: Vec<_> = out
            .measure
            .atoms()
            .iter()
            .filter(|a| a.sign == t.sign && man.geodesic_dist(&a.pos, &t.pos).is_ok_and(|d| d < 0.3))
            .collect();
        let mass: f64 = near.iter().map(|a| a.mass).sum();
        let mean: f64 = near.iter().map(|a| a.mass * a.pos.coords()[0]).sum::<f64>() / mass;
        println!("teacher {:+} {:.2} at {:.2}: recovered {:.4} at {:.4}", t.sign.value(), t.mass, t.pos.coords()[0], mass, mean);
    }
    Ok(())
}
