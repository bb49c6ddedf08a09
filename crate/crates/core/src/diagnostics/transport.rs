//! Explicit-plan upper bound on the cone transport distance `Ŵ2(ν, ν*)`
//! (metric scales `α = β = 1`).

use crate::diagnostics::moments::{assign_cells, check_reference, check_tau};
use crate::error::Result;
use crate::problem::DiscreteMeasure;

/// Cost of the plan that rescales the mass of each cell `Θ_i` radially onto
/// `(r_i, θ_i)` and sends the mass in `Θ_0` to the apex. An atom of mass `w`
/// at distance `δ` from `θ_i` in a cell of mass `r̄_i²` costs
/// `w ((1 − s)² + 4 s sin²(δ/2))` with `s = r_i/r̄_i`; an empty cell costs
/// `r_i²` (mass created at the apex).
pub fn cone_w2_upper(nu: &DiscreteMeasure, reference: &DiscreteMeasure, tau: f64) -> Result<f64> {
    check_reference(nu, reference)?;
    check_tau(reference, tau)?;
    let man = nu.manifold();
    let cells = assign_cells(nu, reference, tau);
    let mut cell_mass = vec![0.0; reference.len()];
    let mut cost = 0.0;
    for (a, cell) in nu.atoms().iter().zip(&cells) {
        match cell {
            Some(i) => cell_mass[*i] += a.mass,
            None => cost += a.mass,
        }
    }
    for (a, cell) in nu.atoms().iter().zip(&cells) {
        if let Some(i) = *cell {
            let spike = &reference.atoms()[i];
            let s = (spike.mass / cell_mass[i]).sqrt();
            let half = 0.5 * man.dist_coords(spike.pos.coords(), a.pos.coords());
            cost += a.mass * ((1.0 - s).powi(2) + 4.0 * s * half.sin().powi(2));
        }
    }
    for (spike, m) in reference.atoms().iter().zip(&cell_mass) {
        if *m == 0.0 {
            cost += spike.mass;
        }
    }
    Ok(cost.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Manifold;
    use crate::problem::Atom;

    fn measure(atoms: &[(f64, f64)]) -> DiscreteMeasure {
        let m = Manifold::torus(1);
        DiscreteMeasure::new(m, atoms.iter().map(|&(w, x)| Atom::new(w, m.point(vec![x]).unwrap())).collect())
            .unwrap()
    }

    #[test]
    fn examples() {
        let reference = measure(&[(1.0, 1.0), (2.0, 4.0)]);
        assert_eq!(cone_w2_upper(&reference, &reference, 1.0).unwrap(), 0.0);

        let single = measure(&[(1.0, 1.0)]);
        let nu = measure(&[(1.69, 1.0)]);
        assert!((cone_w2_upper(&nu, &single, 0.5).unwrap() - 0.3).abs() < 1e-15);

        let outside = measure(&[(1.0, 1.0), (0.25, 3.0)]);
        let w = cone_w2_upper(&outside, &single, 0.5).unwrap();
        assert!((w * w - 0.25).abs() < 1e-15);

        let empty = DiscreteMeasure::empty(Manifold::torus(1));
        let w = cone_w2_upper(&empty, &reference, 1.0).unwrap();
        assert!((w * w - 3.0).abs() < 1e-15);
    }
}
