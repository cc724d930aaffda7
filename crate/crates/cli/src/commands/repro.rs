use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use cordmetrics::io::{Level, MetricTable};

use cordmetrics::reproducibility::{
    bland_altman_svg, calibrate, classifications_to_csv, models_from_csv, models_to_csv, patient_evolution_table, AgreementModel,
    Panel, PatientPoint, PlotPoint,
};
use serde::Serialize;

use crate::run::{manifest_beside, Inputs, Outputs};

#[derive(Debug, Args, Serialize)]
pub struct BlandAltmanArgs {
    /// Control metric tables from the first session.
    #[arg(long, num_args = 1.., required = true)]
    pub scan1: Vec<PathBuf>,
    /// Control metric tables from the second session.
    #[arg(long, num_args = 1.., required = true)]
    pub scan2: Vec<PathBuf>,
    #[arg(long, default_value = "C3C5", env = "CORDMETRICS_LEVEL")]
    pub level: Level,
    /// Calibrate every level present instead of just --level.
    #[arg(long)]
    pub all_levels: bool,
    /// Agreement models (CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Bland-Altman plot of --level, one panel per metric.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    /// Agreement models from `bland-altman`.
    #[arg(long)]
    pub model: PathBuf,
    /// Patient baseline metric tables.
    #[arg(long, num_args = 1.., required = true)]
    pub m0: Vec<PathBuf>,
    /// Patient follow-up metric tables.
    #[arg(long, num_args = 1.., required = true)]
    pub m12: Vec<PathBuf>,
    /// Keep patients with at least this many significant metrics.
    #[arg(long, default_value_t = 1, env = "CORDMETRICS_MIN_SIGNIFICANT")]
    pub min_significant: usize,
    #[arg(long, default_value = "C3C5", env = "CORDMETRICS_LEVEL")]
    pub level: Level,
    #[arg(long)]
    pub out: PathBuf,
    /// Plot patients over the control limits (all patients, unfiltered).
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Control tables to draw as points on the plot.
    #[arg(long, num_args = 1.., requires = "scan2", requires = "svg")]
    pub scan1: Vec<PathBuf>,
    #[arg(long, num_args = 1.., requires = "scan1")]
    pub scan2: Vec<PathBuf>,
}

fn levels_in(table: &MetricTable) -> BTreeSet<Level> {
    table.iter().map(|(k, _)| k.level).collect()
}

pub fn run_bland_altman(args: BlandAltmanArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let scan1 = inputs.tables(&args.scan1)?;
    let scan2 = inputs.tables(&args.scan2)?;
    let levels: Vec<Level> = if args.all_levels { levels_in(&scan1).into_iter().collect() } else { vec![args.level] };

    let mut models = Vec::new();
    let mut panels = Vec::new();
    for level in levels {
        let fitted = calibrate(&scan1, &scan2, level).with_context(|| format!("calibrating {level}"))?;
        for (model, points) in fitted {
            models.push(model);
            if level == args.level {
                panels.push(Panel { model, controls: points, patients: Vec::new() });
            }
        }
    }
    if args.svg.is_some() && panels.is_empty() {
        bail!("nothing to plot at {}", args.level);
    }

    let mut out = Outputs::default();
    out.write(&args.out, models_to_csv(&models))?;
    if let Some(svg) = &args.svg {
        out.write(svg, bland_altman_svg(&panels))?;
    }
    out.finish(&manifest_beside(&args.out), "bland-altman", &args, &inputs, None)
}

pub fn run_classify(args: ClassifyArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let model_bytes = inputs.read(&args.model)?;
    let models: Vec<AgreementModel> =
        models_from_csv(&model_bytes[..]).with_context(|| format!("parsing {}", args.model.display()))?;
    let m0 = inputs.tables(&args.m0)?;
    let m12 = inputs.tables(&args.m12)?;
    let rows = patient_evolution_table(&m0, &m12, &models, args.level, args.min_significant)?;

    let mut out = Outputs::default();
    out.write(&args.out, classifications_to_csv(&rows))?;
    if let Some(svg) = &args.svg {
        let all = patient_evolution_table(&m0, &m12, &models, args.level, 0)?;
        let controls = if args.scan1.is_empty() {
            Vec::new()
        } else {
            let scan1 = inputs.tables(&args.scan1)?;
            let scan2 = inputs.tables(&args.scan2)?;
            calibrate(&scan1, &scan2, args.level)?
        };
        let panels: Vec<Panel> = models
            .iter()
            .filter(|m| m.level == args.level)
            .map(|m| Panel {
                model: *m,
                controls: controls
                    .iter()
                    .find(|(c, _)| c.metric == m.metric)
                    .map(|(_, p)| p.clone())
                    .unwrap_or_default(),
                patients: all
                    .iter()
                    .filter(|r| r.metric == m.metric)
                    .map(|r| PatientPoint { label: r.patient.clone(), point: PlotPoint { mean: r.mean, diff: r.diff } })
                    .collect(),
            })
            .collect();
        out.write(svg, bland_altman_svg(&panels))?;
    }
    out.finish(&manifest_beside(&args.out), "classify", &args, &inputs, None)
}
