//! Least-squares rate fits on logged optimality gaps.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    /// `log gap ≈ a + slope · k`.
    Exponential,
    /// `log gap ≈ a + slope · log k`.
    PowerLaw,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub model: RateModel,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    pub window: (usize, usize),
}

/// Fits the gaps with `window.0 ≤ k ≤ window.1`.
pub fn rate_fit(gaps: &[(usize, f64)], window: (usize, usize), model: RateModel) -> Result<RateFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(k, g) in gaps.iter().filter(|(k, _)| *k >= window.0 && *k <= window.1) {
        if !(g > 0.0) {
            return Err(invalid(format!("rate fit needs positive gaps, got {g} at iteration {k}")));
        }
        let x = match model {
            RateModel::Exponential => k as f64,
            RateModel::PowerLaw if k == 0 => return Err(invalid("power-law fit needs iterations k >= 1")),
            RateModel::PowerLaw => (k as f64).ln(),
        };
        xs.push(x);
        ys.push(g.ln());
    }
    if xs.len() < 2 {
        return Err(invalid(format!("rate fit needs at least two points in window {window:?}")));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(RateFit {
        model,
        slope,
        intercept,
        r_squared,
        points: xs.len(),
        window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_models() {
        let g: Vec<(usize, f64)> = (0..50).map(|k| (k, 2.0 * 0.9f64.powi(k as i32))).collect();
        let f = rate_fit(&g, (0, 49), RateModel::Exponential).unwrap();
        assert!((f.slope - 0.9f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);

        let g: Vec<(usize, f64)> = (1..200).map(|k| (k, 1.0 / k as f64)).collect();
        let f = rate_fit(&g, (1, 199), RateModel::PowerLaw).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_gap() {
        let g = vec![(1, 1.0), (2, 0.0), (3, 0.5)];
        assert!(rate_fit(&g, (1, 3), RateModel::Exponential).is_err());
    }
}
