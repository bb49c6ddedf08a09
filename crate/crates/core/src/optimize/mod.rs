//! Optimizers over measures: conic particle gradient descent (deterministic
//! and stochastic) and the fixed-grid convex baselines.

pub mod baselines;
pub mod cpgd;
pub mod ensemble;
pub mod trajectory;

pub use baselines::{ista_fixed_grid, mirror_fixed_grid, FixedGridOptions};
pub use cpgd::{
    cpgd_step, draw_batch, grad_norm_sq, projected_update, run, sgd_step, stochastic_first_variation, BetaRamp,
    OptimizerConfig, RunOptions, StochasticConfig, MAX_HALVINGS,
};
pub use ensemble::ParticleEnsemble;
pub use trajectory::{Trajectory, TrajectoryRow};
