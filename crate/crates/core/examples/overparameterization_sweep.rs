//! Success rate against the number of particles for a five-spike problem
//! with random initializations.

use meopt::harness::{execute_sweep, AtomRecord, ExperimentConfig, InitKind, SweepAxes, SweepConfig};

fn main() -> meopt::error::Result<()> {
    let mut base = ExperimentConfig::default();
    base.problem.n_f = 10;
    base.problem.lambda = 0.1;
    base.problem.teacher = [(0.8, 0.5), (0.6, 1.6), (1.0, 2.9), (0.7, 4.1), (0.9, 5.3)]
        .into_iter()
        .map(|(mass, x)| AtomRecord { mass, pos: vec![x], sign: Default::default() })
        .collect();
    base.init.kind = InitKind::UniformRandom;
    base.optimizer.iters = 3000;
    base.diagnostics.probe_grid_size = 0;
    let cfg = SweepConfig {
        base,
        axes: SweepAxes { m: Some(vec![4, 8, 16, 32, 64]), ..Default::default() },
        repeats: 5,
        ..Default::default()
    };
    let rows = execute_sweep(&cfg, None)?;
    for chunk in rows.chunks(cfg.repeats) {
        let ok = chunk.iter().filter(|r| r.success).count();
        let best = chunk.iter().map(|r| r.final_excess).fold(f64::INFINITY, f64::min);
        println!("m = {:2}: {ok}/{} successful, best excess {best:.2e}", chunk[0].m, chunk.len());
    }
    Ok(())
}
