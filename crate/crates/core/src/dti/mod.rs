//! Diffusion tensor fitting, eigen-analysis and scalar metrics.

mod eigen;
mod fit;
mod metrics;
mod volume;

pub use eigen::{eig3_sym, EigenSystem};
pub use fit::{check_dti_design, dti_design, fit_dti_voxel, DtiFit};
pub use metrics::{dti_metrics, DtiMetrics};
pub use volume::{fit_dti_volume, DtiVolumeFit, FLAG_EIGEN_CLAMPED, FLAG_FIT_FAILED, FLAG_SIGNAL_CLAMPED};
