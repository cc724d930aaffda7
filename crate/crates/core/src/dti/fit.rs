//! Log-linear tensor fit: ordinary least squares on ln S, then one weighted
//! pass with weights equal to the squared predicted signals.

use crate::io::GradientScheme;
use crate::linalg::{least_squares, SymMat3};
use crate::scalar::Real;
use crate::signal::{dti_signal, Tensor};
use crate::FitError;

const N_PARAMS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtiFit<T> {
    pub tensor: Tensor<T>,
    /// Some measurement was ≤ 0 and was raised to the positivity floor before the log.
    pub signal_clamped: bool,
}

/// Rows of the log-linear design: (Dxx, Dxy, Dxz, Dyy, Dyz, Dzz, ln s0).
pub fn dti_design<T: Real>(scheme: &GradientScheme<T>) -> Vec<T> {
    let two = T::lit(2.0);
    let mut rows = Vec::with_capacity(scheme.len() * N_PARAMS);
    for (b, g) in scheme.iter() {
        rows.extend_from_slice(&[
            -b * g[0] * g[0],
            -two * b * g[0] * g[1],
            -two * b * g[0] * g[2],
            -b * g[1] * g[1],
            -two * b * g[1] * g[2],
            -b * g[2] * g[2],
            T::one(),
        ]);
    }
    rows
}

/// Errors with `DegenerateDesign` when the scheme cannot identify all seven parameters.
pub fn check_dti_design<T: Real>(scheme: &GradientScheme<T>) -> Result<(), FitError> {
    let design = dti_design(scheme);
    let probe = vec![T::zero(); scheme.len()];
    least_squares(&design, scheme.len(), N_PARAMS, &probe).map_err(|_| FitError::DegenerateDesign)?;
    Ok(())
}

fn solve<T: Real>(design: &[T], rows: usize, rhs: &[T]) -> Result<Tensor<T>, FitError> {
    let x = least_squares(design, rows, N_PARAMS, rhs).map_err(|_| FitError::DegenerateDesign)?;
    Ok(Tensor::new(SymMat3::new(x[0], x[1], x[2], x[3], x[4], x[5]), x[6].exp()))
}

pub fn fit_dti_voxel<T: Real>(signals: &[T], scheme: &GradientScheme<T>) -> Result<DtiFit<T>, FitError> {
    if signals.len() != scheme.len() {
        return Err(FitError::LengthMismatch { expected: scheme.len(), actual: signals.len() });
    }
    if signals.iter().all(|s| !(*s > T::zero())) {
        return Err(FitError::AllNonPositive);
    }
    let b0: Vec<T> = scheme.b0_indices().map(|i| signals[i]).collect();
    let mean_b0 = if b0.is_empty() {
        T::zero()
    } else {
        b0.iter().fold(T::zero(), |a, v| a + *v) / T::from_usize_lossy(b0.len())
    };
    let floor = T::lit(1e-8).max(T::lit(1e-6) * mean_b0);
    let mut signal_clamped = false;
    let log_s: Vec<T> = signals
        .iter()
        .map(|s| {
            if *s > T::zero() && s.is_finite() {
                s.ln()
            } else {
                signal_clamped = true;
                floor.ln()
            }
        })
        .collect();

    let rows = scheme.len();
    let design = dti_design(scheme);
    let ols = solve(&design, rows, &log_s)?;

    // weighted pass: scale each row by the predicted signal
    let mut wdesign = design.clone();
    let mut wrhs = log_s.clone();
    for (i, (b, g)) in scheme.iter().enumerate() {
        let w = dti_signal(&ols, b, g);
        if !(w > T::zero()) || !w.is_finite() {
            return Ok(DtiFit { tensor: ols, signal_clamped });
        }
        for v in &mut wdesign[i * N_PARAMS..(i + 1) * N_PARAMS] {
            *v *= w;
        }
        wrhs[i] *= w;
    }
    let tensor = solve(&wdesign, rows, &wrhs).unwrap_or(ols);
    Ok(DtiFit { tensor, signal_clamped })
}
