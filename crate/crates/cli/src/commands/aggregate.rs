use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use cordmetrics::aggregate::{cross_subject_std, select_session, AggregationConfig, AggregationMethod, LevelAtlas};
use cordmetrics::io::Metric;
use cordmetrics::pipeline::level_table;
use serde::Serialize;

use crate::run::{manifest_beside, Inputs, Outputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Partial-volume-corrected maximum a posteriori estimate.
    Map,
    /// White-matter-weight weighted mean.
    Mean,
    /// Unweighted mean over voxels with weight ≥ 0.5.
    Binary,
}

impl From<Method> for AggregationMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Map => AggregationMethod::Map,
            Method::Mean => AggregationMethod::WeightedMean,
            Method::Binary => AggregationMethod::BinaryMask,
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
pub struct AggregateArgs {
    #[command(subcommand)]
    #[serde(skip)]
    pub command: Option<AggregateCommand>,
    /// Directory of metric maps (fa.nii, md.nii, ad.nii, rd.nii, id.nii, fww.nii; any subset).
    #[arg(long, required = true)]
    pub metrics: Option<PathBuf>,
    /// Vertebral level labels (0 background, 1..7 = C1..C7).
    #[arg(long, required = true)]
    pub labels: Option<PathBuf>,
    /// White-matter partial-volume weights in [0, 1].
    #[arg(long, required = true)]
    pub wm_weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "map", env = "CORDMETRICS_METHOD")]
    pub method: Method,
    /// MAP prior variance (default: a quarter of the whole-cord weighted variance).
    #[arg(long)]
    pub prior_variance: Option<f64>,
    /// Minimum effective weight for a level to be reported.
    #[arg(long, default_value_t = 5.0)]
    pub min_weight: f64,
    #[arg(long, default_value = "subject")]
    pub subject: String,
    #[arg(long, default_value = "session")]
    pub session: String,
    /// Output metric table (CSV).
    #[arg(long, required = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum AggregateCommand {
    /// Cross-subject standard deviation per level and metric, ×1000, in the
    /// layout metrics (AD, FA, RD, MD, ID, FWW) × levels (C1..C7, C1C7, C3C5).
    Stats(StatsArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    /// Metric tables, one or more.
    #[arg(long, num_args = 1.., required = true)]
    pub tables: Vec<PathBuf>,
    /// Restrict to one session when subjects have several.
    #[arg(long)]
    pub session: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: AggregateArgs) -> Result<()> {
    if let Some(AggregateCommand::Stats(stats)) = args.command {
        return run_stats(stats);
    }
    let (Some(metrics_dir), Some(labels), Some(weights), Some(out_path)) =
        (&args.metrics, &args.labels, &args.wm_weights, &args.out)
    else {
        bail!("--metrics, --labels, --wm-weights and --out are required");
    };
    let mut inputs = Inputs::default();
    let labels_vol = inputs.volume(labels)?;
    let weights_vol = inputs.volume(weights)?;
    if let Some(bad) = labels_vol.data().iter().find(|l| l.fract() != 0.0 || **l < 0.0 || **l > 7.0) {
        bail!("label value {bad} is not an integer in 0..=7");
    }
    let atlas = LevelAtlas::new(labels_vol.map(|l| l as u8), weights_vol)?;

    let mut maps = Vec::new();
    for m in Metric::ALL {
        let path = metrics_dir.join(format!("{}.nii", m.file_stem()));
        if path.exists() {
            maps.push((m, inputs.volume(&path)?));
        }
    }
    if maps.is_empty() {
        bail!("no metric maps found in {}", metrics_dir.display());
    }
    let cfg = AggregationConfig {
        method: args.method.into(),
        prior_variance: args.prior_variance,
        min_effective_weight: args.min_weight,
    };
    let table = level_table(&maps, &atlas, &cfg, &args.subject, &args.session)?;

    let mut out = Outputs::default();
    out.write(out_path, table.to_csv_string())?;
    out.finish(&manifest_beside(out_path), "aggregate", &args, &inputs, None)
}

fn run_stats(args: StatsArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let mut table = inputs.tables(&args.tables)?;
    if let Some(s) = &args.session {
        table = select_session(&table, s);
    }
    let mut per_subject: BTreeMap<(&str, _, _), usize> = BTreeMap::new();
    for (k, _) in table.iter() {
        *per_subject.entry((k.subject.as_str(), k.level, k.metric)).or_default() += 1;
    }
    if let Some(((subject, ..), _)) = per_subject.iter().find(|(_, n)| **n > 1) {
        bail!("subject {subject} has several sessions; choose one with --session");
    }
    let std = cross_subject_std(&table).context("computing cross-subject dispersion")?;
    let mut out = Outputs::default();
    out.write(&args.out, std.to_display_csv())?;
    out.finish(&manifest_beside(&args.out), "aggregate stats", &args, &inputs, None)
}
