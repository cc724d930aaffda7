//! Ball-and-stick fitting: ID (shared diffusivity) and FWW (ball weight).

mod fit;
mod model;
mod volume;

pub use fit::{ballstick_metrics, fit_ballstick_voxel, init_from_dti, BallStickFitOptions, BallStickFitResult};
pub use model::{BallStickModel, Internal, N_INTERNAL};
pub use volume::{fit_ballstick_volume, BallStickVolumeFit};
