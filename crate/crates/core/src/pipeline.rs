//! Fit → aggregate → pool for one session, the chain shared by the CLI and
//! the end-to-end tests.

use thiserror::Error;

use crate::aggregate::{aggregate_metrics, pooled_levels, AggregateError, AggregationConfig, LevelAtlas};
use crate::ballstick::{fit_ballstick_volume, BallStickFitOptions, BallStickVolumeFit};
use crate::dti::{fit_dti_volume, DtiVolumeFit};
use crate::io::{GradientScheme, Level, Metric, MetricTable};
use crate::volume::Volume;
use crate::{Execution, FitError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

/// Which model families to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Models {
    pub dti: bool,
    pub ballstick: bool,
}

impl Models {
    pub const ALL: Models = Models { dti: true, ballstick: true };
    pub const DTI: Models = Models { dti: true, ballstick: false };
}

pub struct SessionFits {
    pub dti: DtiVolumeFit<f64>,
    pub ballstick: Option<BallStickVolumeFit<f64>>,
}

impl SessionFits {
    pub fn metric_maps(&self) -> Vec<(Metric, Volume<f64>)> {
        let mut maps: Vec<(Metric, Volume<f64>)> =
            Metric::DTI.iter().filter_map(|m| self.dti.metric_volume(*m).map(|v| (*m, v))).collect();
        if let Some(bs) = &self.ballstick {
            maps.extend(Metric::BALLSTICK.iter().filter_map(|m| bs.metric_volume(*m).map(|v| (*m, v))));
        }
        maps
    }
}

/// The tensor fit always runs: it seeds the ball-and-stick fit.
pub fn fit_session(
    dwi: &Volume<f64>,
    scheme: &GradientScheme<f64>,
    mask: &Volume<bool>,
    models: Models,
    options: &BallStickFitOptions,
    seed: u64,
    execution: Execution,
) -> Result<SessionFits, PipelineError> {
    let dti = fit_dti_volume(dwi, scheme, mask, execution)?;
    let ballstick = if models.ballstick {
        Some(fit_ballstick_volume(dwi, scheme, mask, &dti, options, seed, execution)?)
    } else {
        None
    };
    Ok(SessionFits { dti, ballstick })
}

/// Per-level rows for every map plus the C1C7 and C3C5 pooled rows.
pub fn level_table(
    maps: &[(Metric, Volume<f64>)],
    atlas: &LevelAtlas,
    cfg: &AggregationConfig,
    subject: &str,
    session: &str,
) -> Result<MetricTable, AggregateError> {
    let refs: Vec<(Metric, &Volume<f64>)> = maps.iter().map(|(m, v)| (*m, v)).collect();
    let (mut values, weights) = aggregate_metrics(&refs, atlas, cfg, subject, session)?;
    for range in [Level::C1C7, Level::C3C5] {
        let pooled = pooled_levels(&values, Some(&weights), range)?;
        values.extend(&pooled)?;
    }
    Ok(values)
}
