//! Reference minimizer from the fine-grid convex oracle, compared with the
//! objective of the teacher itself.

use meopt::harness::{solve_oracle, ExperimentConfig};

fn main() -> meopt::error::Result<()> {
    let cfg = ExperimentConfig::default();
    let spec = cfg.build_problem()?;
    let report = solve_oracle(&cfg)?;
    println!("J* = {:.15}", report.j_star);
    println!("J(teacher) = {:.15}", spec.objective(spec.teacher())?);
    println!("polished = {}, stationarity = {:.2e}", report.polished, report.stationarity);
    for a in &report.atoms {
        println!("  mass {:.12} at {:.12}", a.mass, a.pos[0]);
    }
    println!("certificate at tol {}: {}", report.certificate_tol, report.certificate_pass);
    Ok(())
}
