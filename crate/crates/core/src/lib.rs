#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cone;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod manifold;
pub mod optimize;
pub mod problem;
