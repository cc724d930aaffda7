use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use cordmetrics::ballstick::BallStickFitOptions;
use cordmetrics::io::{Datatype, Metric};
use cordmetrics::pipeline::{fit_session, Models};
use cordmetrics::Execution;
use serde::Serialize;

use crate::run::{Inputs, Outputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Dti,
    /// Ball-and-stick, initialized from an internal tensor fit.
    Ballstick,
    /// Both models.
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long, value_enum, env = "CORDMETRICS_MODEL")]
    pub model: Model,
    /// 4-D diffusion-weighted NIfTI volume.
    #[arg(long)]
    pub dwi: PathBuf,
    /// FSL b-values file.
    #[arg(long)]
    pub bval: PathBuf,
    /// FSL b-vectors file.
    #[arg(long)]
    pub bvec: PathBuf,
    /// Voxels to fit (non-zero).
    #[arg(long)]
    pub mask: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for ball-and-stick restarts.
    #[arg(long, default_value_t = 0, env = "CORDMETRICS_SEED")]
    pub seed: u64,
}

pub fn run(args: FitArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let dwi = inputs.volume(&args.dwi)?;
    let scheme = inputs.scheme(&args.bval, &args.bvec)?;
    let mask = inputs.mask(&args.mask)?;
    if mask.frames() != 1 {
        bail!("mask must be 3-D, got {} frames", mask.frames());
    }
    let models = match args.model {
        Model::Dti => Models::DTI,
        Model::Ballstick => Models { dti: false, ballstick: true },
        Model::All => Models::ALL,
    };
    let fits = fit_session(&dwi, &scheme, &mask, models, &BallStickFitOptions::default(), args.seed, Execution::Parallel)?;

    let mut out = Outputs::default();
    out.dir(&args.out)?;
    if models.dti {
        for m in Metric::DTI {
            let v = fits.dti.metric_volume(m).expect("tensor metric");
            out.volume(&args.out.join(format!("{}.nii", m.file_stem())), &v, Datatype::Float32)?;
        }
        out.volume(&args.out.join("tensor.nii"), &fits.dti.tensor_volume(), Datatype::Float32)?;
        out.volume(&args.out.join("dti_flags.nii"), &fits.dti.flag_volume(), Datatype::UInt8)?;
    }
    if let Some(bs) = &fits.ballstick {
        for m in Metric::BALLSTICK {
            let v = bs.metric_volume(m).expect("ball-and-stick metric");
            out.volume(&args.out.join(format!("{}.nii", m.file_stem())), &v, Datatype::Float32)?;
        }
        out.volume(&args.out.join("ballstick_params.nii"), &bs.params_volume(), Datatype::Float32)?;
        out.volume(&args.out.join("ballstick_converged.nii"), &bs.converged_volume(), Datatype::Float32)?;
    }
    let seed = fits.ballstick.is_some().then_some(args.seed);
    out.finish(&args.out.join("manifest.json"), "fit", &args, &inputs, seed)
}
