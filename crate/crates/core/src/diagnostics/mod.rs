//! Empirical counterparts of the local convergence theory: local moments,
//! kernels, the local expansion, sharpness, transport bounds, prior quality
//! and rate fits.

pub mod bounds;
pub mod expansion;
pub mod kernels;
pub mod moments;
pub mod rates;
pub mod transport;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use bounds::{mirror_rate_bound, mirror_rate_bound_simplified, prior_quality};
pub use expansion::{
    expansion_from_reports, expansion_residual, sharpness_from_parts, sharpness_ratio, ExpansionReport,
    SHARPNESS_GAP_FLOOR,
};
pub use kernels::{compute_kernels, KernelReport};
pub use moments::{check_tau, default_tau, local_moments, min_separation, LocalMomentReport, SpikeMoments};
pub use rates::{rate_fit, RateFit, RateModel};
pub use transport::cone_w2_upper;

/// Row-major matrix with explicit dimensions, as written to JSON reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JsonMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl JsonMatrix {
    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl From<&DMatrix<f64>> for JsonMatrix {
    fn from(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }
}
