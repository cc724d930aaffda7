use rayon::prelude::*;

use crate::dti::{dti_metrics, eig3_sym, fit_dti_voxel, DtiMetrics};
use crate::dti::fit::check_dti_design;
use crate::io::{GradientScheme, Metric};
use crate::scalar::Real;
use crate::signal::Tensor;
use crate::volume::Volume;
use crate::{Execution, FitError};

pub const FLAG_SIGNAL_CLAMPED: u8 = 1;
pub const FLAG_EIGEN_CLAMPED: u8 = 2;
pub const FLAG_FIT_FAILED: u8 = 4;

/// Per-voxel tensor fit over a mask. Voxels outside the mask, or whose fit
/// failed, are `None` and read back as NaN in the derived volumes.
#[derive(Debug, Clone)]
pub struct DtiVolumeFit<T> {
    pub spatial: [usize; 3],
    pub voxel_size: [f64; 3],
    pub tensors: Vec<Option<Tensor<T>>>,
    pub metrics: Vec<Option<DtiMetrics<T>>>,
    pub flags: Vec<u8>,
}

impl<T: Real> DtiVolumeFit<T> {
    fn scalar_volume(&self, values: impl Iterator<Item = f64>) -> Volume<f64> {
        Volume::new(self.spatial, 1, self.voxel_size, values.collect()).expect("fit grid is valid")
    }

    /// FA, MD, AD or RD; `None` for the ball-and-stick metrics.
    pub fn metric_volume(&self, metric: Metric) -> Option<Volume<f64>> {
        let pick: fn(&DtiMetrics<T>) -> T = match metric {
            Metric::FA => |m| m.fa,
            Metric::MD => |m| m.md,
            Metric::AD => |m| m.ad,
            Metric::RD => |m| m.rd,
            Metric::ID | Metric::FWW => return None,
        };
        Some(self.scalar_volume(self.metrics.iter().map(|m| m.as_ref().map_or(f64::NAN, |m| pick(m).as_f64()))))
    }

    /// Seven frames: Dxx, Dxy, Dxz, Dyy, Dyz, Dzz, s0.
    pub fn tensor_volume(&self) -> Volume<f64> {
        let series: Vec<Vec<f64>> = self
            .tensors
            .iter()
            .map(|t| match t {
                Some(t) => t.d.entries.iter().chain(std::iter::once(&t.s0)).map(|v| v.as_f64()).collect(),
                None => vec![f64::NAN; 7],
            })
            .collect();
        Volume::from_series(self.spatial, self.voxel_size, &series, 7, f64::NAN).expect("fit grid is valid")
    }

    pub fn flag_volume(&self) -> Volume<f64> {
        self.scalar_volume(self.flags.iter().map(|f| *f as f64))
    }
}

pub fn fit_dti_volume<T: Real>(
    dwi: &Volume<T>,
    scheme: &GradientScheme<T>,
    mask: &Volume<bool>,
    execution: Execution,
) -> Result<DtiVolumeFit<T>, FitError> {
    dwi.ensure_same_grid(mask)?;
    if dwi.frames() != scheme.len() {
        return Err(FitError::LengthMismatch { expected: scheme.len(), actual: dwi.frames() });
    }
    check_dti_design(scheme)?;

    let fit_one = |voxel: usize| -> (Option<Tensor<T>>, Option<DtiMetrics<T>>, u8) {
        if !mask.at(voxel, 0) {
            return (None, None, 0);
        }
        match fit_dti_voxel(&dwi.series(voxel), scheme) {
            Ok(fit) => {
                let m = dti_metrics(&eig3_sym(&fit.tensor.d));
                let mut flags = 0;
                if fit.signal_clamped {
                    flags |= FLAG_SIGNAL_CLAMPED;
                }
                if m.clamped {
                    flags |= FLAG_EIGEN_CLAMPED;
                }
                (Some(fit.tensor), Some(m), flags)
            }
            Err(_) => (None, None, FLAG_FIT_FAILED),
        }
    };
    let n = dwi.n_voxels();
    let results: Vec<_> = match execution {
        Execution::Serial => (0..n).map(fit_one).collect(),
        Execution::Parallel => (0..n).into_par_iter().map(fit_one).collect(),
    };

    let mut out = DtiVolumeFit {
        spatial: dwi.spatial_dims(),
        voxel_size: dwi.voxel_size(),
        tensors: Vec::with_capacity(n),
        metrics: Vec::with_capacity(n),
        flags: Vec::with_capacity(n),
    };
    for (t, m, f) in results {
        out.tensors.push(t);
        out.metrics.push(m);
        out.flags.push(f);
    }
    Ok(out)
}
