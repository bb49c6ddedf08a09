//! Fixed-grid comparison of the two vertical geometries (`β = 0`): mirror
//! descent on the masses against ISTA, single spike on a 100-point grid.

use meopt::harness::{execute_compare, AtomRecord, ExperimentConfig};

fn main() -> meopt::error::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.problem.teacher = vec![AtomRecord { mass: 1.0, pos: vec![0.6 * std::f64::consts::PI], sign: Default::default() }];
    cfg.optimizer.iters = 1000;
    cfg.oracle.max_iters = 5000;

    let out = execute_compare(&cfg, None)?;
    for k in [1, 10, 100, 1000] {
        let r = &out.rows[k];
        println!("k = {k:4}  mirror {:.3e}  ista {:.3e}", r.gap_mirror, r.gap_ista);
    }
    if let Some(fit) = &out.summary.mirror_power_law {
        println!("mirror gap ~ k^{:.3} on [100, 1000] (r^2 = {:.4})", fit.slope, fit.r_squared);
    }
    Ok(())
}
