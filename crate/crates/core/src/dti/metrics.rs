use crate::dti::eigen::EigenSystem;
use crate::scalar::Real;

/// FA, MD, AD and RD of one tensor. Diffusivities in mm²/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtiMetrics<T> {
    pub fa: T,
    pub md: T,
    pub ad: T,
    pub rd: T,
    /// Set when a negative eigenvalue was clamped before computing the metrics.
    pub clamped: bool,
}

/// Negative eigenvalues are replaced by 1e-12·max(λ1, ε) and flagged.
pub fn dti_metrics<T: Real>(e: &EigenSystem<T>) -> DtiMetrics<T> {
    let floor = T::lit(1e-12) * e.values[0].max(T::epsilon());
    let mut clamped = false;
    let l = e.values.map(|v| {
        if v < T::zero() {
            clamped = true;
            floor
        } else {
            v
        }
    });
    let three = T::lit(3.0);
    let md = (l[0] + l[1] + l[2]) / three;
    let norm_sq = l[0] * l[0] + l[1] * l[1] + l[2] * l[2];
    let fa = if norm_sq > T::zero() {
        let spread = (l[0] - l[1]).powi(2) + (l[1] - l[2]).powi(2) + (l[2] - l[0]).powi(2);
        (T::lit(0.5) * spread / norm_sq).sqrt().min(T::one())
    } else {
        T::zero()
    };
    DtiMetrics { fa, md, ad: l[0], rd: (l[1] + l[2]) / T::lit(2.0), clamped }
}
