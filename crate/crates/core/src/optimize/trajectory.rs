use serde::{Deserialize, Serialize};

use crate::optimize::ParticleEnsemble;

/// One logged iteration. Row `k` describes the state before step `k`; the
/// step-size and objective-change fields describe the step taken from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub iter: usize,
    pub objective: f64,
    pub gap: Option<f64>,
    /// `‖g_ν‖²` at the step sizes accepted for this row's step.
    pub grad_norm_sq: f64,
    pub min_first_variation: Option<f64>,
    pub w2hat: Option<f64>,
    pub wall_ms: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    /// `J(ν_{k+1}) − J(ν_k)` from the accurate increment formula; `None` on
    /// the final row.
    pub delta_objective: Option<f64>,
    pub halvings: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    /// Ensembles before step `iter`, recorded when
    /// [`RunOptions::snapshot_every`](crate::optimize::RunOptions) is set.
    #[serde(skip)]
    pub snapshots: Vec<(usize, ParticleEnsemble)>,
}

impl Trajectory {
    pub fn push(&mut self, row: TrajectoryRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.iter < row.iter));
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TrajectoryRow> {
        self.rows.last()
    }

    /// `(iter, gap)` pairs for rows with a gap.
    pub fn gaps(&self) -> Vec<(usize, f64)> {
        self.rows.iter().filter_map(|r| r.gap.map(|g| (r.iter, g))).collect()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.objective).collect()
    }
}
