use rayon::prelude::*;

use crate::ballstick::{fit_ballstick_voxel, init_from_dti, BallStickFitOptions, BallStickFitResult};
use crate::derive_seed;
use crate::dti::{check_dti_design, DtiVolumeFit};
use crate::io::{GradientScheme, Metric};
use crate::scalar::Real;
use crate::volume::Volume;
use crate::{Execution, FitError};

/// Per-voxel ball-and-stick results; `None` outside the mask or where the
/// co-indexed tensor fit is absent.
#[derive(Debug, Clone)]
pub struct BallStickVolumeFit<T> {
    pub spatial: [usize; 3],
    pub voxel_size: [f64; 3],
    pub fits: Vec<Option<BallStickFitResult<T>>>,
}

impl<T: Real> BallStickVolumeFit<T> {
    fn scalar_volume(&self, f: impl Fn(&BallStickFitResult<T>) -> f64) -> Volume<f64> {
        let data = self.fits.iter().map(|r| r.as_ref().map_or(f64::NAN, &f)).collect();
        Volume::new(self.spatial, 1, self.voxel_size, data).expect("fit grid is valid")
    }

    /// ID or FWW; `None` for the tensor metrics.
    pub fn metric_volume(&self, metric: Metric) -> Option<Volume<f64>> {
        match metric {
            Metric::ID => Some(self.scalar_volume(|r| r.params.d.as_f64())),
            Metric::FWW => Some(self.scalar_volume(|r| r.params.fww().as_f64())),
            _ => None,
        }
    }

    /// Six frames: f_stick, d, μx, μy, μz, s0.
    pub fn params_volume(&self) -> Volume<f64> {
        let series: Vec<Vec<f64>> = self
            .fits
            .iter()
            .map(|r| match r {
                Some(r) => {
                    let p = &r.params;
                    [p.f_stick, p.d, p.mu[0], p.mu[1], p.mu[2], p.s0].iter().map(|v| v.as_f64()).collect()
                }
                None => vec![f64::NAN; 6],
            })
            .collect();
        Volume::from_series(self.spatial, self.voxel_size, &series, 6, f64::NAN).expect("fit grid is valid")
    }

    /// 1 where the winning start converged, 0 where it did not, NaN when absent.
    pub fn converged_volume(&self) -> Volume<f64> {
        self.scalar_volume(|r| if r.converged { 1.0 } else { 0.0 })
    }
}

/// Restart seeds depend only on `seed` and the voxel index, so the output is
/// independent of scheduling.
pub fn fit_ballstick_volume<T: Real>(
    dwi: &Volume<T>,
    scheme: &GradientScheme<T>,
    mask: &Volume<bool>,
    dti_field: &DtiVolumeFit<T>,
    options: &BallStickFitOptions,
    seed: u64,
    execution: Execution,
) -> Result<BallStickVolumeFit<T>, FitError> {
    dwi.ensure_same_grid(mask)?;
    if dti_field.spatial != dwi.spatial_dims() {
        return Err(FitError::Shape(crate::volume::ShapeError::Mismatch(dti_field.spatial, dwi.spatial_dims())));
    }
    if dwi.frames() != scheme.len() {
        return Err(FitError::LengthMismatch { expected: scheme.len(), actual: dwi.frames() });
    }
    check_dti_design(scheme)?;

    let fit_one = |voxel: usize| -> Option<BallStickFitResult<T>> {
        if !mask.at(voxel, 0) {
            return None;
        }
        let tensor = dti_field.tensors[voxel].as_ref()?;
        let init = init_from_dti(tensor);
        fit_ballstick_voxel(&dwi.series(voxel), scheme, &init, options, derive_seed(seed, &[voxel as u64])).ok()
    };
    let n = dwi.n_voxels();
    let fits = match execution {
        Execution::Serial => (0..n).map(fit_one).collect(),
        Execution::Parallel => (0..n).into_par_iter().map(fit_one).collect(),
    };
    Ok(BallStickVolumeFit { spatial: dwi.spatial_dims(), voxel_size: dwi.voxel_size(), fits })
}
