//! Per-vertebral-level white-matter values from voxel-wise metric maps.
//!
//! Three estimators share one atlas: a partial-volume weighted mean, a
//! single-unknown MAP estimate of the mixing model
//! `v = w·μ + (1 − w)·background`, and the naive binary-mask mean (w ≥ 0.5)
//! kept as a baseline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::io::{Level, Metric, MetricTable, RowKey, TableError};
use crate::volume::{ShapeError, Volume};

/// Voxels below this weight feed the local background estimate.
pub const BACKGROUND_WEIGHT: f64 = 0.1;
/// Binary-mask threshold on the white-matter weight.
pub const BINARY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("level {level}: effective weight {weight:.3} below the required {required}")]
    InsufficientWeight { level: Level, weight: f64, required: f64 },
    #[error("level {0} has no labelled voxels")]
    LevelAbsent(Level),
    #[error("{0} is a pooled range; aggregate its constituents and pool the table")]
    PooledLevel(Level),
    #[error("cannot pool {pooled} for ({subject}, {session}, {metric}): level {missing} missing")]
    MissingLevel { subject: String, session: String, metric: Metric, pooled: Level, missing: Level },
    #[error("({level}, {metric}): {n} subject(s), need at least 2")]
    TooFewSubjects { level: Level, metric: Metric, n: usize },
    #[error("invalid atlas: {0}")]
    InvalidAtlas(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Vertebral labels (0 = background, 1..=7 = C1..C7) and WM weights in [0, 1].
#[derive(Debug, Clone)]
pub struct LevelAtlas {
    labels: Volume<u8>,
    wm_weight: Volume<f64>,
}

impl LevelAtlas {
    pub fn new(labels: Volume<u8>, wm_weight: Volume<f64>) -> Result<Self, AggregateError> {
        labels.ensure_same_grid(&wm_weight)?;
        if labels.frames() != 1 || wm_weight.frames() != 1 {
            return Err(AggregateError::InvalidAtlas("labels and weights must be 3-D".into()));
        }
        if let Some(l) = labels.data().iter().find(|l| **l > 7) {
            return Err(AggregateError::InvalidAtlas(format!("label {l} outside 0..=7")));
        }
        if let Some(w) = wm_weight.data().iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(AggregateError::InvalidAtlas(format!("weight {w} outside [0, 1]")));
        }
        Ok(Self { labels, wm_weight })
    }

    pub fn labels(&self) -> &Volume<u8> {
        &self.labels
    }

    pub fn wm_weight(&self) -> &Volume<f64> {
        &self.wm_weight
    }

    pub fn levels_present(&self) -> Vec<Level> {
        let present: BTreeSet<u8> = self.labels.data().iter().copied().filter(|l| *l > 0).collect();
        present.into_iter().filter_map(Level::from_label).collect()
    }

    /// Inclusive slice range covered by a level's labels.
    fn slab(&self, label: u8) -> Option<(usize, usize)> {
        let [nx, ny, _] = self.labels.spatial_dims();
        let mut range: Option<(usize, usize)> = None;
        for (i, _) in self.labels.data().iter().enumerate().filter(|(_, l)| **l == label) {
            let z = i / (nx * ny);
            range = Some(range.map_or((z, z), |(lo, hi)| (lo.min(z), hi.max(z))));
        }
        range
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AggregationMethod {
    WeightedMean,
    #[default]
    Map,
    BinaryMask,
}

impl AggregationMethod {
    pub fn name(self) -> &'static str {
        match self {
            AggregationMethod::WeightedMean => "mean",
            AggregationMethod::Map => "map",
            AggregationMethod::BinaryMask => "binary",
        }
    }
}

impl fmt::Display for AggregationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregationMethod {
    type Err = AggregateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" | "weighted-mean" => Ok(Self::WeightedMean),
            "map" => Ok(Self::Map),
            "binary" | "binary-mask" => Ok(Self::BinaryMask),
            other => Err(AggregateError::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregationConfig {
    pub method: AggregationMethod,
    /// Prior variance of the level value; `None` uses (0.5 × whole-cord weighted std)².
    pub prior_variance: Option<f64>,
    /// Minimum Σw (voxel count for the binary mask) to report a level.
    pub min_effective_weight: f64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self { method: AggregationMethod::Map, prior_variance: None, min_effective_weight: 5.0 }
    }
}

impl AggregationConfig {
    pub fn with_method(method: AggregationMethod) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), AggregateError> {
        if let Some(v) = self.prior_variance {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AggregateError::InvalidConfig(format!("prior variance must be positive, got {v}")));
            }
        }
        if !(self.min_effective_weight >= 0.0 && self.min_effective_weight.is_finite()) {
            return Err(AggregateError::InvalidConfig(format!(
                "min effective weight must be non-negative, got {}",
                self.min_effective_weight
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelEstimate {
    pub value: f64,
    pub effective_weight: f64,
}

/// Weighted mean Σw(v − c)/Σw + c around the first value c, so a constant
/// field comes back exactly.
fn shifted_mean(pairs: impl Iterator<Item = (f64, f64)> + Clone) -> Option<(f64, f64)> {
    let shift = pairs.clone().map(|(_, v)| v).next()?;
    let (sw, swv) = pairs.fold((0.0, 0.0), |(sw, swv), (w, v)| (sw + w, swv + w * (v - shift)));
    (sw > 0.0).then(|| (shift + swv / sw, sw))
}

/// One level of one metric map. NaN voxels (failed fits) are skipped.
pub fn aggregate_level(
    metric: &Volume<f64>,
    atlas: &LevelAtlas,
    level: Level,
    cfg: &AggregationConfig,
) -> Result<LevelEstimate, AggregateError> {
    cfg.validate()?;
    metric.ensure_same_grid(atlas.labels())?;
    let label = level.label().ok_or(AggregateError::PooledLevel(level))?;
    let labels = atlas.labels().data();
    let weights = atlas.wm_weight().data();
    let values = &metric.data()[..metric.n_voxels()];

    if !labels.contains(&label) {
        return Err(AggregateError::LevelAbsent(level));
    }
    let in_level: Vec<(f64, f64)> = labels
        .iter()
        .zip(weights)
        .zip(values)
        .filter(|((l, _), v)| **l == label && v.is_finite())
        .map(|((_, w), v)| (*w, *v))
        .collect();

    let effective_weight = match cfg.method {
        AggregationMethod::BinaryMask => in_level.iter().filter(|(w, _)| *w >= BINARY_THRESHOLD).count() as f64,
        _ => in_level.iter().map(|(w, _)| w).sum(),
    };
    if effective_weight < cfg.min_effective_weight || effective_weight == 0.0 {
        return Err(AggregateError::InsufficientWeight { level, weight: effective_weight, required: cfg.min_effective_weight });
    }

    let value = match cfg.method {
        AggregationMethod::WeightedMean => shifted_mean(in_level.iter().copied()).expect("positive weight").0,
        AggregationMethod::BinaryMask => {
            shifted_mean(in_level.iter().filter(|(w, _)| *w >= BINARY_THRESHOLD).map(|(_, v)| (1.0, *v)))
                .expect("non-empty mask")
                .0
        }
        AggregationMethod::Map => {
            let (prior_mean, prior_var) = whole_cord_prior(labels, weights, values, cfg.prior_variance);
            let background = atlas
                .slab(label)
                .and_then(|(z0, z1)| {
                    let [nx, ny, _] = atlas.labels().spatial_dims();
                    let slab = z0 * nx * ny..(z1 + 1) * nx * ny;
                    shifted_mean(
                        weights[slab.clone()]
                            .iter()
                            .zip(&values[slab])
                            .filter(|(w, v)| **w < BACKGROUND_WEIGHT && v.is_finite())
                            .map(|(_, v)| (1.0, *v)),
                    )
                })
                .map_or(prior_mean, |(bg, _)| bg);
            map_estimate(&in_level, background, prior_mean, prior_var)
        }
    };
    Ok(LevelEstimate { value, effective_weight })
}

/// Weighted mean and prior variance over every labelled voxel.
fn whole_cord_prior(labels: &[u8], weights: &[f64], values: &[f64], prior_variance: Option<f64>) -> (f64, f64) {
    let cord = || {
        labels
            .iter()
            .zip(weights)
            .zip(values)
            .filter(|((l, _), v)| **l > 0 && v.is_finite())
            .map(|((_, w), v)| (*w, *v))
    };
    let (mean, sw) = shifted_mean(cord()).unwrap_or((0.0, 0.0));
    let var = prior_variance.unwrap_or_else(|| {
        if sw == 0.0 {
            return 0.0;
        }
        let spread = cord().map(|(w, v)| w * (v - mean) * (v - mean)).sum::<f64>() / sw;
        0.25 * spread
    });
    (mean, var)
}

/// Ridge-regularized WLS for μ in r = w·μ + e, r = v − (1 − w)·bg, with the
/// noise variance taken from the unregularized residuals. Works in coordinates
/// shifted by the prior mean so constant fields are exact.
fn map_estimate(voxels: &[(f64, f64)], background: f64, prior_mean: f64, prior_var: f64) -> f64 {
    let centred_bg = background - prior_mean;
    let r: Vec<(f64, f64)> = voxels.iter().map(|(w, v)| (*w, (v - prior_mean) - (1.0 - w) * centred_bg)).collect();
    let sww: f64 = r.iter().map(|(w, _)| w * w).sum();
    let swr: f64 = r.iter().map(|(w, r)| w * r).sum();
    if prior_var <= 0.0 {
        return prior_mean;
    }
    let wls = swr / sww;
    let n = r.iter().filter(|(w, _)| *w > 0.0).count();
    let noise_var = if n > 1 {
        r.iter().filter(|(w, _)| *w > 0.0).map(|(w, r)| (r - w * wls).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    if noise_var <= 0.0 {
        return prior_mean + wls;
    }
    prior_mean + (swr / noise_var) / (sww / noise_var + 1.0 / prior_var)
}

/// Aggregates every metric map over every level in the atlas. Returns values
/// and the matching effective weights (for pooling).
pub fn aggregate_metrics(
    maps: &[(Metric, &Volume<f64>)],
    atlas: &LevelAtlas,
    cfg: &AggregationConfig,
    subject: &str,
    session: &str,
) -> Result<(MetricTable, MetricTable), AggregateError> {
    let mut values = MetricTable::new();
    let mut weights = MetricTable::new();
    for (metric, map) in maps {
        for level in atlas.levels_present() {
            let est = aggregate_level(map, atlas, level, cfg)?;
            let key = RowKey::new(subject, session, level, *metric);
            values.insert(key.clone(), Metric::clamp(*metric, est.value))?;
            weights.insert(key, est.effective_weight)?;
        }
    }
    Ok((values, weights))
}

/// Pooled C1C7/C3C5 rows: the effective-weight-weighted mean of the
/// constituent levels (equal weights when none are supplied).
pub fn pooled_levels(values: &MetricTable, weights: Option<&MetricTable>, range: Level) -> Result<MetricTable, AggregateError> {
    if !range.is_pooled() {
        return Err(AggregateError::InvalidConfig(format!("{range} is not a pooled range")));
    }
    let groups: BTreeSet<(String, String, Metric)> = values
        .iter()
        .filter(|(k, _)| !k.level.is_pooled())
        .map(|(k, _)| (k.subject.clone(), k.session.clone(), k.metric))
        .collect();
    let mut out = MetricTable::new();
    for (subject, session, metric) in groups {
        let mut parts = Vec::with_capacity(range.constituents().len());
        for &level in range.constituents() {
            let key = RowKey::new(subject.as_str(), session.as_str(), level, metric);
            let missing = || AggregateError::MissingLevel {
                subject: subject.clone(),
                session: session.clone(),
                metric,
                pooled: range,
                missing: level,
            };
            let v = values.get(&key).ok_or_else(missing)?;
            let w = match weights {
                Some(t) => t.get(&key).ok_or_else(missing)?,
                None => 1.0,
            };
            parts.push((w, v));
        }
        let (pooled, _) = shifted_mean(parts.iter().copied())
            .ok_or_else(|| AggregateError::InvalidConfig(format!("zero total weight pooling {range}")))?;
        out.insert(RowKey::new(subject, session, range, metric), pooled)?;
    }
    Ok(out)
}

/// Sample standard deviation (n − 1) per (level, metric) across subjects.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StdTable {
    pub cells: BTreeMap<(Level, Metric), (f64, usize)>,
}

impl StdTable {
    pub fn get(&self, level: Level, metric: Metric) -> Option<f64> {
        self.cells.get(&(level, metric)).map(|(s, _)| *s)
    }

    /// Table 1 layout: one row per metric (AD, FA, RD, MD, ID, FWW), one
    /// column per level (C1..C7, C1C7, C3C5), values ×1000 to two decimals,
    /// `NA` where a cell is absent.
    pub fn to_display_csv(&self) -> String {
        let mut out = String::from("Metrics");
        for level in Level::ALL {
            out.push(',');
            out.push_str(level.name());
        }
        out.push('\n');
        for metric in Metric::ALL {
            out.push_str(metric.name());
            for level in Level::ALL {
                match self.get(level, metric) {
                    Some(s) => out.push_str(&format!(",{:.2}", s * 1000.0)),
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// One value per subject is expected for each (level, metric); restrict the
/// table to a single session first when it holds several.
pub fn cross_subject_std(table: &MetricTable) -> Result<StdTable, AggregateError> {
    let mut groups: BTreeMap<(Level, Metric), Vec<f64>> = BTreeMap::new();
    for (k, v) in table.iter() {
        groups.entry((k.level, k.metric)).or_default().push(v);
    }
    let mut cells = BTreeMap::new();
    for ((level, metric), xs) in groups {
        let n = xs.len();
        if n < 2 {
            return Err(AggregateError::TooFewSubjects { level, metric, n });
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        cells.insert((level, metric), (var.sqrt(), n));
    }
    Ok(StdTable { cells })
}

/// Rows of one session only.
pub fn select_session(table: &MetricTable, session: &str) -> MetricTable {
    let mut out = MetricTable::new();
    for (k, v) in table.iter().filter(|(k, _)| k.session == session) {
        out.insert(k.clone(), v).expect("keys unique in source");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const VS: [f64; 3] = [1.0; 3];

    fn atlas_1d(labels: Vec<u8>, weights: Vec<f64>) -> LevelAtlas {
        let n = labels.len();
        LevelAtlas::new(
            Volume::new([n, 1, 1], 1, VS, labels).unwrap(),
            Volume::new([n, 1, 1], 1, VS, weights).unwrap(),
        )
        .unwrap()
    }

    fn map_1d(v: Vec<f64>) -> Volume<f64> {
        let n = v.len();
        Volume::new([n, 1, 1], 1, VS, v).unwrap()
    }

    fn cfg(method: AggregationMethod) -> AggregationConfig {
        AggregationConfig { method, prior_variance: None, min_effective_weight: 0.0 }
    }

    #[test]
    fn constant_field_is_exact_for_every_method() {
        let c = 0.1;
        let atlas = atlas_1d(vec![3; 7], vec![1.0; 7]);
        let m = map_1d(vec![c; 7]);
        for method in [AggregationMethod::WeightedMean, AggregationMethod::Map, AggregationMethod::BinaryMask] {
            assert_eq!(aggregate_level(&m, &atlas, Level::C3, &cfg(method)).unwrap().value, c, "{method}");
        }
    }

    #[test]
    fn constant_field_with_partial_volume() {
        let atlas = atlas_1d(vec![0, 1, 1, 1, 2, 2, 0], vec![0.0, 0.3, 0.9, 0.6, 1.0, 0.05, 0.0]);
        let m = map_1d(vec![0.7; 7]);
        for method in [AggregationMethod::WeightedMean, AggregationMethod::Map, AggregationMethod::BinaryMask] {
            for level in [Level::C1, Level::C2] {
                assert_eq!(aggregate_level(&m, &atlas, level, &cfg(method)).unwrap().value, 0.7);
            }
        }
    }

    #[test]
    fn zero_weight_voxel_ignored_by_weighted_mean() {
        let atlas = atlas_1d(vec![1, 1], vec![1.0, 0.0]);
        let m = map_1d(vec![2.5, 9.0]);
        assert_eq!(aggregate_level(&m, &atlas, Level::C1, &cfg(AggregationMethod::WeightedMean)).unwrap().value, 2.5);
    }

    #[test]
    fn nan_voxels_skipped() {
        let atlas = atlas_1d(vec![1, 1, 1], vec![1.0, 1.0, 1.0]);
        let m = map_1d(vec![1.0, f64::NAN, 3.0]);
        let est = aggregate_level(&m, &atlas, Level::C1, &cfg(AggregationMethod::WeightedMean)).unwrap();
        assert_eq!(est.value, 2.0);
        assert_eq!(est.effective_weight, 2.0);
    }

    #[test]
    fn errors() {
        let atlas = atlas_1d(vec![1, 1, 0], vec![1.0, 1.0, 0.0]);
        let m = map_1d(vec![1.0; 3]);
        let strict = AggregationConfig::default();
        assert!(matches!(
            aggregate_level(&m, &atlas, Level::C1, &strict),
            Err(AggregateError::InsufficientWeight { weight, .. }) if weight == 2.0
        ));
        assert!(matches!(aggregate_level(&m, &atlas, Level::C4, &strict), Err(AggregateError::LevelAbsent(Level::C4))));
        assert!(matches!(aggregate_level(&m, &atlas, Level::C3C5, &strict), Err(AggregateError::PooledLevel(_))));
        assert!(matches!(aggregate_level(&map_1d(vec![1.0; 4]), &atlas, Level::C1, &strict), Err(AggregateError::Shape(_))));
        let bad = AggregationConfig { prior_variance: Some(0.0), ..strict };
        assert!(matches!(aggregate_level(&m, &atlas, Level::C1, &bad), Err(AggregateError::InvalidConfig(_))));
    }

    #[test]
    fn atlas_validation() {
        let l = Volume::new([2, 1, 1], 1, VS, vec![1u8, 8]).unwrap();
        let w = Volume::new([2, 1, 1], 1, VS, vec![0.5, 0.5]).unwrap();
        assert!(matches!(LevelAtlas::new(l, w.clone()), Err(AggregateError::InvalidAtlas(_))));
        let l = Volume::new([2, 1, 1], 1, VS, vec![1u8, 2]).unwrap();
        let w_bad = Volume::new([2, 1, 1], 1, VS, vec![0.5, 1.5]).unwrap();
        assert!(matches!(LevelAtlas::new(l.clone(), w_bad), Err(AggregateError::InvalidAtlas(_))));
        assert_eq!(LevelAtlas::new(l, w).unwrap().levels_present(), vec![Level::C1, Level::C2]);
    }

    // Level 1 voxels mix WM (μ_true) with a background; background voxels in
    // the same slab carry the background value exactly.
    fn mixing_fixture(mu_true: f64, bg: f64, noise: &[f64]) -> (LevelAtlas, Volume<f64>, Vec<(f64, f64)>) {
        let w = [1.0, 0.9, 0.75, 0.5, 0.3, 0.2, 0.0, 0.0, 0.15];
        let labels = vec![1, 1, 1, 1, 1, 1, 0, 0, 1];
        let v: Vec<f64> = w.iter().enumerate().map(|(i, w)| w * mu_true + (1.0 - w) * bg + noise[i % noise.len()]).collect();
        let level: Vec<(f64, f64)> = w.iter().zip(&v).zip(&labels).filter(|(_, l)| **l == 1).map(|((w, v), _)| (*w, *v)).collect();
        (atlas_1d(labels, w.to_vec()), map_1d(v), level)
    }

    #[test]
    fn map_corrects_partial_volume() {
        let (mu_true, bg) = (0.75, 0.2);
        let (atlas, m, level) = mixing_fixture(mu_true, bg, &[0.0]);
        let naive = level.iter().map(|(_, v)| v).sum::<f64>() / level.len() as f64;
        let map = aggregate_level(&m, &atlas, Level::C1, &cfg(AggregationMethod::Map)).unwrap().value;
        assert!((map - mu_true).abs() < (naive - mu_true).abs());
        // noiseless: the one-unknown least-squares problem is solved exactly
        assert!((map - mu_true).abs() < 1e-14, "{map}");
    }

    /// Independent oracle: normal equations of the augmented system
    /// [w/σ; 1/σ₀] μ = [r/σ; μ₀/σ₀].
    fn ridge_oracle(level: &[(f64, f64)], bg: f64, mu0: f64, prior_var: f64) -> f64 {
        let rows: Vec<(f64, f64)> = level.iter().map(|(w, v)| (*w, v - (1.0 - w) * bg)).collect();
        let ls = rows.iter().map(|(w, r)| w * r).sum::<f64>() / rows.iter().map(|(w, _)| w * w).sum::<f64>();
        let fit: Vec<(f64, f64)> = rows.iter().filter(|(w, _)| *w > 0.0).copied().collect();
        let s2 = fit.iter().map(|(w, r)| (r - w * ls).powi(2)).sum::<f64>() / (fit.len() - 1) as f64;
        let a = fit.iter().map(|(w, _)| w * w / s2).sum::<f64>() + 1.0 / prior_var;
        let b = fit.iter().map(|(w, r)| w * r / s2).sum::<f64>() + mu0 / prior_var;
        b / a
    }

    #[test]
    fn map_matches_ridge_oracle_and_limits() {
        let noise = [0.01, -0.02, 0.015, 0.0, -0.005, 0.02, 0.0, 0.0, 0.01];
        let (atlas, m, level) = mixing_fixture(0.7, 0.25, &noise);
        let bg = 0.25;
        let cord: Vec<(f64, f64)> = atlas.wm_weight().data().iter().zip(m.data()).zip(atlas.labels().data())
            .filter(|(_, l)| **l > 0).map(|((w, v), _)| (*w, *v)).collect();
        let mu0 = cord.iter().map(|(w, v)| w * v).sum::<f64>() / cord.iter().map(|(w, _)| w).sum::<f64>();
        for prior_var in [1e-9, 1e-4, 1e-2, 1e6] {
            let c = AggregationConfig { prior_variance: Some(prior_var), ..cfg(AggregationMethod::Map) };
            let got = aggregate_level(&m, &atlas, Level::C1, &c).unwrap().value;
            let want = ridge_oracle(&level, bg, mu0, prior_var);
            assert!((got - want).abs() < 1e-12, "σ₀²={prior_var}: {got} vs {want}");
        }
        // large prior variance → partial-volume-corrected least squares
        let ls = {
            let rows: Vec<(f64, f64)> = level.iter().map(|(w, v)| (*w, v - (1.0 - w) * bg)).collect();
            rows.iter().map(|(w, r)| w * r).sum::<f64>() / rows.iter().map(|(w, _)| w * w).sum::<f64>()
        };
        let wide = AggregationConfig { prior_variance: Some(1e6), ..cfg(AggregationMethod::Map) };
        assert!((aggregate_level(&m, &atlas, Level::C1, &wide).unwrap().value - ls).abs() < 1e-9);
        // vanishing prior variance → prior mean
        let tight = AggregationConfig { prior_variance: Some(1e-9), ..cfg(AggregationMethod::Map) };
        let shrunk = aggregate_level(&m, &atlas, Level::C1, &tight).unwrap().value;
        assert!((shrunk - mu0).abs() < 1e-4 * (ls - mu0).abs(), "{shrunk} vs {mu0}");
    }

    #[test]
    fn binary_mask_thresholds_and_counts() {
        let atlas = atlas_1d(vec![1, 1, 1, 1], vec![0.49, 0.5, 1.0, 0.2]);
        let m = map_1d(vec![100.0, 1.0, 3.0, 50.0]);
        let est = aggregate_level(&m, &atlas, Level::C1, &cfg(AggregationMethod::BinaryMask)).unwrap();
        assert_eq!(est.value, 2.0);
        assert_eq!(est.effective_weight, 2.0);
    }

    fn level_table(values: &[(Level, f64)]) -> MetricTable {
        let mut t = MetricTable::new();
        for (l, v) in values {
            t.insert(RowKey::new("C01", "scan1", *l, Metric::FA), *v).unwrap();
        }
        t
    }

    #[test]
    fn pooling() {
        let t = level_table(&[(Level::C3, 0.5), (Level::C4, 0.5), (Level::C5, 0.5)]);
        assert_eq!(pooled_levels(&t, None, Level::C3C5).unwrap().lookup("C01", "scan1", Level::C3C5, Metric::FA), Some(0.5));
        let t = level_table(&[(Level::C3, 1.0), (Level::C4, 2.0), (Level::C5, 3.0)]);
        assert_eq!(pooled_levels(&t, None, Level::C3C5).unwrap().lookup("C01", "scan1", Level::C3C5, Metric::FA), Some(2.0));
        let w = level_table(&[(Level::C3, 1.0), (Level::C4, 1.0), (Level::C5, 2.0)]);
        let pooled = pooled_levels(&t, Some(&w), Level::C3C5).unwrap();
        assert_eq!(pooled.lookup("C01", "scan1", Level::C3C5, Metric::FA), Some(2.25));
        let t = level_table(&[(Level::C3, 1.0), (Level::C5, 3.0)]);
        assert!(matches!(
            pooled_levels(&t, None, Level::C3C5),
            Err(AggregateError::MissingLevel { missing: Level::C4, .. })
        ));
        assert!(matches!(pooled_levels(&t, None, Level::C1C7), Err(AggregateError::MissingLevel { .. })));
    }

    #[test]
    fn std_table() {
        let mut t = MetricTable::new();
        for (s, v) in [("A", 0.0), ("B", 1.0), ("C", 2.0)] {
            t.insert(RowKey::new(s, "scan1", Level::C1, Metric::AD), v).unwrap();
            t.insert(RowKey::new(s, "scan1", Level::C2, Metric::AD), 1.0).unwrap();
        }
        let std = cross_subject_std(&t).unwrap();
        assert_eq!(std.get(Level::C1, Metric::AD), Some(1.0));
        assert_eq!(std.get(Level::C2, Metric::AD), Some(0.0));

        let mut one = MetricTable::new();
        one.insert(RowKey::new("A", "scan1", Level::C1, Metric::AD), 1.0).unwrap();
        assert!(matches!(cross_subject_std(&one), Err(AggregateError::TooFewSubjects { n: 1, .. })));
    }

    #[test]
    fn display_layout_follows_table_one() {
        let mut cells = BTreeMap::new();
        cells.insert((Level::C1, Metric::AD), (0.20e-3, 8));
        cells.insert((Level::C3C5, Metric::FWW), (0.04371, 8));
        let text = StdTable { cells }.to_display_csv();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "Metrics,C1,C2,C3,C4,C5,C6,C7,C1C7,C3C5");
        let firsts: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(firsts, ["AD", "FA", "RD", "MD", "ID", "FWW"]);
        assert!(lines[1].starts_with("AD,0.20,NA"));
        assert!(lines[6].ends_with(",43.71"));
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 10));
    }

    #[test]
    fn select_session_filters() {
        let mut t = level_table(&[(Level::C3, 1.0)]);
        t.insert(RowKey::new("C01", "scan2", Level::C3, Metric::FA), 2.0).unwrap();
        let s = select_session(&t, "scan2");
        assert_eq!(s.len(), 1);
        assert_eq!(s.lookup("C01", "scan2", Level::C3, Metric::FA), Some(2.0));
    }

    proptest! {
        #[test]
        fn weighted_mean_scale_invariant(
            data in prop::collection::vec((0.01f64..1.0, -5.0f64..5.0), 1..30),
            c in 0.01f64..1.0,
        ) {
            let n = data.len();
            let labels = vec![2u8; n];
            let w: Vec<f64> = data.iter().map(|(w, _)| *w).collect();
            let ws: Vec<f64> = w.iter().map(|w| w * c).collect();
            let m = map_1d(data.iter().map(|(_, v)| *v).collect());
            let a = aggregate_level(&m, &atlas_1d(labels.clone(), w), Level::C2, &cfg(AggregationMethod::WeightedMean)).unwrap().value;
            let b = aggregate_level(&m, &atlas_1d(labels, ws), Level::C2, &cfg(AggregationMethod::WeightedMean)).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn constant_field_any_weights(
            w in prop::collection::vec(0.0f64..=1.0, 2..30),
            c in -3.0f64..3.0,
        ) {
            prop_assume!(w.iter().filter(|w| **w >= 0.5).count() > 0);
            let n = w.len();
            let atlas = atlas_1d(vec![5u8; n], w);
            let m = map_1d(vec![c; n]);
            for method in [AggregationMethod::WeightedMean, AggregationMethod::Map, AggregationMethod::BinaryMask] {
                prop_assert_eq!(aggregate_level(&m, &atlas, Level::C5, &cfg(method)).unwrap().value, c);
            }
        }
    }
}
