//! Spinal cord diffusion MRI microstructure analysis.
//!
//! Voxel-wise tensor and ball-and-stick fitting, per-vertebral-level
//! aggregation with partial-volume correction, Bland-Altman calibration of
//! scan/rescan agreement and classification of longitudinal changes, plus a
//! synthetic cord phantom to exercise the whole chain.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

pub mod aggregate;
pub mod ballstick;
pub mod dti;
pub mod io;
pub mod linalg;
pub mod phantom;
pub mod pipeline;
pub mod reproducibility;
pub mod scalar;
pub mod signal;
pub mod volume;

use thiserror::Error;

pub use scalar::Real;

pub type Tensor64 = signal::Tensor<f64>;
pub type BallStick64 = signal::BallStick<f64>;
pub type EigenSystem64 = dti::EigenSystem<f64>;
pub type DtiMetrics64 = dti::DtiMetrics<f64>;
pub type BallStickFitResult64 = ballstick::BallStickFitResult<f64>;
pub type AgreementModel64 = reproducibility::AgreementModel<f64>;

pub type DwiVolume = volume::Volume<f64>;
pub type Mask = volume::Volume<bool>;

/// Errors shared by the voxel-wise fitters.
#[derive(Debug, Error)]
pub enum FitError {
    #[error("gradient scheme cannot identify the tensor (rank < 7)")]
    DegenerateDesign,
    #[error("every signal is non-positive")]
    AllNonPositive,
    #[error("expected {expected} measurements, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Shape(#[from] volume::ShapeError),
}

/// Whether voxel loops run on the rayon pool. Both produce identical output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

/// Mixes a base seed with a path of stream indices (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    stream.iter().fold(mix(base), |acc, s| mix(acc ^ mix(*s)))
}
