use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Args;
use cordmetrics::io::{format_gradient_table, Datatype, MetricTable};
use cordmetrics::phantom::{make_cohort, make_phantom, EffectSpec, PhantomConfig, PhantomOutput};
use serde::{Serialize, Serializer};

use crate::run::{Inputs, Outputs};

/// Signal-to-noise ratio; `inf` disables noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr(pub Option<f64>);

impl FromStr for Snr {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" => Ok(Snr(None)),
            other => match other.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(Snr(Some(v))),
                Ok(v) if v == f64::INFINITY => Ok(Snr(None)),
                _ => Err(format!("expected a positive number or 'inf', got '{s}'")),
            },
        }
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("inf"),
        }
    }
}

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => s.serialize_f64(v),
            None => s.serialize_str("inf"),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// SNR of the mean white-matter b0 signal, or `inf`.
    #[arg(long, default_value = "inf", env = "CORDMETRICS_SNR")]
    pub snr: Snr,
    /// Noise seed.
    #[arg(long, default_value_t = 0, env = "CORDMETRICS_SEED")]
    pub seed: u64,
    /// Number of controls (two sessions each: scan1, scan2).
    #[arg(long, default_value_t = 0)]
    pub controls: usize,
    /// Number of patients (two sessions each: M0, M12).
    #[arg(long, default_value_t = 0)]
    pub patients: usize,
    /// JSON effect specification applied to patient M12 sessions.
    #[arg(long)]
    pub effects: Option<PathBuf>,
    /// JSON phantom configuration; --snr and --seed override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn write_session(out: &mut Outputs, dir: &Path, p: &PhantomOutput) -> Result<()> {
    out.volume(&dir.join("dwi.nii"), &p.dwi, Datatype::Float32)?;
    let (bval, bvec) = format_gradient_table(&p.config.scheme);
    out.write(&dir.join("dwi.bval"), bval)?;
    out.write(&dir.join("dwi.bvec"), bvec)?;
    out.volume(&dir.join("mask.nii"), &p.mask.map(|m| if m { 1.0 } else { 0.0 }), Datatype::UInt8)?;
    out.volume(&dir.join("labels.nii"), &p.atlas.labels().map(f64::from), Datatype::UInt8)?;
    out.volume(&dir.join("wm_weight.nii"), p.atlas.wm_weight(), Datatype::Float32)?;
    Ok(())
}

pub fn run(args: SimulateArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let mut cfg: PhantomConfig = match &args.config {
        Some(path) => serde_json::from_slice(&inputs.read(path)?).with_context(|| format!("parsing {}", path.display()))?,
        None => PhantomConfig::default(),
    };
    cfg.snr = args.snr.0;
    cfg.seed = args.seed;
    cfg.validate()?;
    let effects: Option<EffectSpec> = match &args.effects {
        Some(path) => Some(serde_json::from_slice(&inputs.read(path)?).with_context(|| format!("parsing {}", path.display()))?),
        None => None,
    };

    let mut out = Outputs::default();
    out.dir(&args.out)?;
    let cohort_mode = args.controls + args.patients > 0;
    if !cohort_mode {
        if effects.is_some() {
            bail!("--effects needs a cohort (--controls/--patients)");
        }
        let p = make_phantom(&cfg)?;
        write_session(&mut out, &args.out, &p)?;
        out.write(&args.out.join("ground_truth.csv"), p.ground_truth.to_csv_string())?;
    } else {
        let cohort = make_cohort(&cfg, args.controls, args.patients, &effects.unwrap_or_default(), args.seed)?;
        let mut truth = MetricTable::new();
        let mut sessions = String::from("subject,session,group,seed\n");
        for s in &cohort.sessions {
            let p = s.generate()?;
            let dir = args.out.join(format!("sub-{}", s.subject)).join(format!("ses-{}", s.session));
            write_session(&mut out, &dir, &p)?;
            truth.extend(&p.ground_truth)?;
            let group = serde_json::to_value(s.group)?;
            sessions.push_str(&format!("{},{},{},{}\n", s.subject, s.session, group.as_str().unwrap_or_default(), s.config.seed));
        }
        out.write(&args.out.join("ground_truth.csv"), truth.to_csv_string())?;
        out.write(&args.out.join("sessions.csv"), sessions)?;
        out.write(&args.out.join("effects.json"), serde_json::to_string_pretty(&cohort.injected)? + "\n")?;
    }
    out.write(&args.out.join("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
    out.finish(&args.out.join("manifest.json"), "simulate", &args, &inputs, Some(args.seed))
}
