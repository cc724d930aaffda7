//! Synthetic cervical cord phantom: a straight cylinder along the slice axis
//! with a grey-matter core, a white-matter annulus and surrounding CSF, split
//! into seven vertebral slabs with known per-level white-matter parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::LevelAtlas;
use crate::derive_seed;
use crate::io::{GradientScheme, Level, Metric, MetricTable, RowKey};
use crate::linalg::{normalize, SymMat3, Vec3};
use crate::signal::{add_rician_noise, ballstick_signal, dti_signal, BallStick, Tensor};
use crate::volume::Volume;

/// In-plane supersampling factor for partial-volume fractions.
pub const SUPERSAMPLE: usize = 4;
pub const CONTROL_SESSIONS: [&str; 2] = ["scan1", "scan2"];
pub const PATIENT_SESSIONS: [&str; 2] = ["M0", "M12"];

#[derive(Debug, Error, PartialEq)]
pub enum PhantomError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid ground truth: {0}")]
    InvalidTruth(String),
    #[error("invalid effect: {0}")]
    InvalidEffect(String),
}

/// White-matter model of one level. Fibres run along the configured axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum WmTruth {
    /// Cylindrically symmetric tensor with axial and radial diffusivities.
    Tensor { ad: f64, rd: f64, s0: f64 },
    #[serde(rename = "ballstick")]
    BallStick { f_stick: f64, d: f64, s0: f64 },
}

impl WmTruth {
    /// Cylindrical tensor with the given FA and MD:
    /// λ∥ = md + 2t, λ⊥ = md − t, t = md·FA·√(3 / (9 − 6·FA²)).
    pub fn from_fa_md(fa: f64, md: f64, s0: f64) -> Self {
        let t = md * fa * (3.0 / (9.0 - 6.0 * fa * fa)).sqrt();
        WmTruth::Tensor { ad: md + 2.0 * t, rd: md - t, s0 }
    }

    pub fn s0(&self) -> f64 {
        match *self {
            WmTruth::Tensor { s0, .. } | WmTruth::BallStick { s0, .. } => s0,
        }
    }

    /// Metrics defined by this model, in closed form.
    pub fn metrics(&self) -> Vec<(Metric, f64)> {
        match *self {
            WmTruth::Tensor { ad, rd, .. } => {
                let fa = (ad - rd).abs() / (ad * ad + 2.0 * rd * rd).sqrt();
                vec![(Metric::AD, ad), (Metric::FA, fa), (Metric::RD, rd), (Metric::MD, (ad + 2.0 * rd) / 3.0)]
            }
            WmTruth::BallStick { f_stick, d, .. } => vec![(Metric::ID, d), (Metric::FWW, 1.0 - f_stick)],
        }
    }

    pub fn metric(&self, metric: Metric) -> Option<f64> {
        self.metrics().into_iter().find(|(m, _)| *m == metric).map(|(_, v)| v)
    }

    pub fn tensor(&self, axis: &Vec3<f64>) -> Option<Tensor<f64>> {
        match *self {
            WmTruth::Tensor { ad, rd, s0 } => {
                let mut d = SymMat3::outer(axis, ad - rd);
                for i in [0, 3, 5] {
                    d.entries[i] += rd;
                }
                Some(Tensor::new(d, s0))
            }
            WmTruth::BallStick { .. } => None,
        }
    }

    pub fn ballstick(&self, axis: &Vec3<f64>) -> Option<BallStick<f64>> {
        match *self {
            WmTruth::BallStick { f_stick, d, s0 } => Some(BallStick { f_stick, d, mu: *axis, s0 }),
            WmTruth::Tensor { .. } => None,
        }
    }

    pub fn signal(&self, b: f64, g: &Vec3<f64>, axis: &Vec3<f64>) -> f64 {
        match self {
            WmTruth::Tensor { .. } => dti_signal(&self.tensor(axis).expect("tensor truth"), b, g),
            WmTruth::BallStick { .. } => ballstick_signal(&self.ballstick(axis).expect("ball-stick truth"), b, g),
        }
    }

    fn validate(&self) -> Result<(), PhantomError> {
        let ok = match *self {
            WmTruth::Tensor { ad, rd, s0 } => rd > 0.0 && ad >= rd && s0 > 0.0 && ad.is_finite() && s0.is_finite(),
            WmTruth::BallStick { f_stick, d, s0 } => {
                (0.0..=1.0).contains(&f_stick) && d > 0.0 && s0 > 0.0 && d.is_finite() && s0.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(PhantomError::InvalidTruth(format!("{self:?}")))
        }
    }

    /// Shifts one metric, holding its natural partner fixed: AD↔RD, FA↔MD,
    /// ID↔stick fraction, FWW↔ID.
    pub fn shifted(&self, metric: Metric, shift: f64) -> Result<Self, PhantomError> {
        let out = match (*self, metric) {
            (WmTruth::Tensor { ad, rd, s0 }, Metric::AD) => WmTruth::Tensor { ad: ad + shift, rd, s0 },
            (WmTruth::Tensor { ad, rd, s0 }, Metric::RD) => WmTruth::Tensor { ad, rd: rd + shift, s0 },
            (t @ WmTruth::Tensor { .. }, Metric::FA) => {
                WmTruth::from_fa_md(t.metric(Metric::FA).unwrap() + shift, t.metric(Metric::MD).unwrap(), t.s0())
            }
            (t @ WmTruth::Tensor { .. }, Metric::MD) => {
                WmTruth::from_fa_md(t.metric(Metric::FA).unwrap(), t.metric(Metric::MD).unwrap() + shift, t.s0())
            }
            (WmTruth::BallStick { f_stick, d, s0 }, Metric::ID) => WmTruth::BallStick { f_stick, d: d + shift, s0 },
            (WmTruth::BallStick { f_stick, d, s0 }, Metric::FWW) => WmTruth::BallStick { f_stick: f_stick - shift, d, s0 },
            (truth, m) => return Err(PhantomError::InvalidEffect(format!("{m} is not a parameter of {truth:?}"))),
        };
        out.validate().map_err(|_| PhantomError::InvalidEffect(format!("{metric} shift {shift} leaves {out:?}")))?;
        Ok(out)
    }
}

fn default_scheme() -> GradientScheme<f64> {
    GradientScheme::default_protocol()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    /// Voxels along x, y and the slice axis z.
    pub grid: [usize; 3],
    /// Isotropic voxel edge, mm.
    pub voxel_size: f64,
    /// WM ground truth for C1..C7; C1 occupies the first slices.
    pub levels: Vec<WmTruth>,
    pub fiber_axis: [f64; 3],
    pub gm_md: f64,
    pub gm_s0: f64,
    pub csf_diffusivity: f64,
    pub csf_s0: f64,
    /// Outer radius of the cord (WM boundary), mm.
    pub cord_radius: f64,
    /// Radius of the GM core, mm.
    pub wm_inner_radius: f64,
    /// `None` is noiseless. Noise sigma is the mean WM s0 over levels divided by this.
    pub snr: Option<f64>,
    pub seed: u64,
    #[serde(skip, default = "default_scheme")]
    pub scheme: GradientScheme<f64>,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            grid: [80, 80, 16],
            voxel_size: 2.0,
            levels: [0.80, 0.78, 0.76, 0.74, 0.72, 0.70, 0.68].iter().map(|fa| WmTruth::from_fa_md(*fa, 1.0e-3, 1000.0)).collect(),
            fiber_axis: [0.0, 0.0, 1.0],
            gm_md: 0.8e-3,
            gm_s0: 1000.0,
            csf_diffusivity: 3.0e-3,
            csf_s0: 1000.0,
            cord_radius: 6.0,
            wm_inner_radius: 2.5,
            snr: None,
            seed: 0,
            scheme: default_scheme(),
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<(), PhantomError> {
        let geom = |msg: String| Err(PhantomError::InvalidGeometry(msg));
        if self.grid.contains(&0) {
            return geom(format!("empty grid {:?}", self.grid));
        }
        if self.grid[2] < 7 {
            return geom(format!("{} slices cannot hold seven levels", self.grid[2]));
        }
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return geom(format!("voxel size {}", self.voxel_size));
        }
        if !(self.wm_inner_radius > 0.0 && self.cord_radius > self.wm_inner_radius) {
            return geom(format!("radii must satisfy 0 < {} < {}", self.wm_inner_radius, self.cord_radius));
        }
        let half_extent = self.grid[0].min(self.grid[1]) as f64 * self.voxel_size / 2.0;
        if self.cord_radius > half_extent {
            return geom(format!("cord radius {} exceeds the in-plane half extent {half_extent}", self.cord_radius));
        }
        if self.levels.len() != 7 {
            return Err(PhantomError::InvalidTruth(format!("expected 7 levels, got {}", self.levels.len())));
        }
        for truth in &self.levels {
            truth.validate()?;
        }
        if normalize(&self.fiber_axis).is_none() {
            return Err(PhantomError::InvalidTruth("zero fibre axis".into()));
        }
        let positive = [self.gm_md, self.gm_s0, self.csf_diffusivity, self.csf_s0];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(PhantomError::InvalidTruth("GM and CSF parameters must be positive".into()));
        }
        if let Some(snr) = self.snr {
            if !(snr > 0.0) {
                return Err(PhantomError::InvalidTruth(format!("snr {snr}")));
            }
        }
        if self.scheme.is_empty() {
            return Err(PhantomError::InvalidTruth("empty gradient scheme".into()));
        }
        Ok(())
    }

    /// Slices per level: an even split with the remainder going to the first levels.
    pub fn slab_sizes(&self) -> [usize; 7] {
        let (base, extra) = (self.grid[2] / 7, self.grid[2] % 7);
        std::array::from_fn(|i| base + usize::from(i < extra))
    }

    /// Level index (0 = C1) of each slice.
    pub fn slice_levels(&self) -> Vec<usize> {
        self.slab_sizes().iter().enumerate().flat_map(|(i, n)| std::iter::repeat_n(i, *n)).collect()
    }

    pub fn noise_sigma(&self) -> f64 {
        match self.snr {
            Some(snr) if snr.is_finite() => self.levels.iter().map(WmTruth::s0).sum::<f64>() / self.levels.len() as f64 / snr,
            _ => 0.0,
        }
    }

    pub fn axis(&self) -> Vec3<f64> {
        normalize(&self.fiber_axis).unwrap_or([0.0, 0.0, 1.0])
    }

    /// In-plane (wm, gm, csf) area fractions of column (x, y).
    pub fn fractions(&self, x: usize, y: usize) -> [f64; 3] {
        let h = self.voxel_size;
        let (cx, cy) = (self.grid[0] as f64 * h / 2.0, self.grid[1] as f64 * h / 2.0);
        let mut counts = [0usize; 3];
        for i in 0..SUPERSAMPLE {
            for j in 0..SUPERSAMPLE {
                let px = (x as f64 + (i as f64 + 0.5) / SUPERSAMPLE as f64) * h - cx;
                let py = (y as f64 + (j as f64 + 0.5) / SUPERSAMPLE as f64) * h - cy;
                let r = px.hypot(py);
                let c = if r < self.wm_inner_radius {
                    1
                } else if r < self.cord_radius {
                    0
                } else {
                    2
                };
                counts[c] += 1;
            }
        }
        let n = (SUPERSAMPLE * SUPERSAMPLE) as f64;
        counts.map(|c| c as f64 / n)
    }

    /// Noiseless signal of a voxel with the given fractions in level `level`.
    pub fn mixed_signal(&self, fractions: &[f64; 3], level: usize, b: f64, g: &Vec3<f64>) -> f64 {
        let axis = self.axis();
        let [w, gm, csf] = *fractions;
        let mut s = 0.0;
        if w > 0.0 {
            s += w * self.levels[level].signal(b, g, &axis);
        }
        if gm > 0.0 {
            s += gm * self.gm_s0 * (-b * self.gm_md).exp();
        }
        if csf > 0.0 {
            s += csf * self.csf_s0 * (-b * self.csf_diffusivity).exp();
        }
        s
    }
}

pub struct PhantomOutput {
    pub dwi: Volume<f64>,
    pub atlas: LevelAtlas,
    /// Voxels with any cord (WM or GM) content.
    pub mask: Volume<bool>,
    /// Per-voxel (wm, gm, csf) fractions.
    pub fractions: Volume<[f64; 3]>,
    pub ground_truth: MetricTable,
    pub config: PhantomConfig,
}

impl PhantomOutput {
    pub fn wm_pure_voxels(&self) -> impl Iterator<Item = usize> + '_ {
        self.fractions.data().iter().enumerate().filter(|(_, f)| f[0] == 1.0).map(|(i, _)| i)
    }

    /// Level index (0 = C1) of a voxel.
    pub fn level_index(&self, voxel: usize) -> usize {
        let [nx, ny, _] = self.dwi.spatial_dims();
        self.config.slice_levels()[voxel / (nx * ny)]
    }
}

/// Per-level WM truth rows for one session.
pub fn ground_truth_table(cfg: &PhantomConfig, subject: &str, session: &str) -> MetricTable {
    let mut table = MetricTable::new();
    for (level, truth) in Level::VERTEBRAL.iter().zip(&cfg.levels) {
        for (metric, value) in truth.metrics() {
            table.insert(RowKey::new(subject, session, *level, metric), value).expect("one row per level and metric");
        }
    }
    table
}

pub fn make_phantom(cfg: &PhantomConfig) -> Result<PhantomOutput, PhantomError> {
    cfg.validate()?;
    let [nx, ny, nz] = cfg.grid;
    let vs = [cfg.voxel_size; 3];
    let plane: Vec<[f64; 3]> = (0..nx * ny).map(|i| cfg.fractions(i % nx, i / nx)).collect();
    let slice_levels = cfg.slice_levels();
    let sigma = cfg.noise_sigma();
    let n = nx * ny * nz;

    let series: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|voxel| {
            let f = &plane[voxel % (nx * ny)];
            let level = slice_levels[voxel / (nx * ny)];
            let clean = cfg.scheme.iter().map(|(b, g)| cfg.mixed_signal(f, level, b, g));
            if sigma > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[voxel as u64]));
                clean.map(|s| add_rician_noise(s, sigma, &mut rng)).collect()
            } else {
                clean.collect()
            }
        })
        .collect();
    let dwi = Volume::from_series(cfg.grid, vs, &series, cfg.scheme.len(), 0.0).expect("validated grid");

    let fractions: Vec<[f64; 3]> = (0..n).map(|v| plane[v % (nx * ny)]).collect();
    let labels: Vec<u8> = fractions
        .iter()
        .enumerate()
        .map(|(v, f)| if f[2] < 1.0 { slice_levels[v / (nx * ny)] as u8 + 1 } else { 0 })
        .collect();
    let mask = Volume::new(cfg.grid, 1, vs, labels.iter().map(|l| *l > 0).collect()).expect("validated grid");
    let atlas = LevelAtlas::new(
        Volume::new(cfg.grid, 1, vs, labels).expect("validated grid"),
        Volume::new(cfg.grid, 1, vs, fractions.iter().map(|f| f[0]).collect()).expect("validated grid"),
    )
    .expect("labels and weights in range");
    Ok(PhantomOutput {
        dwi,
        atlas,
        mask,
        fractions: Volume::new(cfg.grid, 1, vs, fractions).expect("validated grid"),
        ground_truth: ground_truth_table(cfg, "phantom", "truth"),
        config: cfg.clone(),
    })
}

fn default_effect_levels() -> Vec<Level> {
    vec![Level::C3C5]
}

/// A metric shift applied to one patient's follow-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub patient: String,
    pub metric: Metric,
    pub shift: f64,
    /// Pooled ranges expand to their constituent levels. Defaults to C3C5.
    #[serde(default = "default_effect_levels")]
    pub levels: Vec<Level>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EffectSpec {
    #[serde(default)]
    pub effects: Vec<Effect>,
}

/// What was actually injected, with pooled ranges expanded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedEffect {
    pub patient: String,
    pub metric: Metric,
    pub shift: f64,
    pub levels: Vec<Level>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Control,
    Patient,
}

/// One session of a cohort, generated on demand.
#[derive(Debug, Clone)]
pub struct SessionSpec {
    pub subject: String,
    pub session: String,
    pub group: Group,
    pub config: PhantomConfig,
}

impl SessionSpec {
    pub fn generate(&self) -> Result<PhantomOutput, PhantomError> {
        let mut out = make_phantom(&self.config)?;
        out.ground_truth = self.ground_truth();
        Ok(out)
    }

    pub fn ground_truth(&self) -> MetricTable {
        ground_truth_table(&self.config, &self.subject, &self.session)
    }
}

#[derive(Debug, Clone)]
pub struct Cohort {
    pub sessions: Vec<SessionSpec>,
    pub injected: Vec<InjectedEffect>,
}

pub fn control_id(i: usize) -> String {
    format!("C{:02}", i + 1)
}

pub fn patient_id(i: usize) -> String {
    format!("P{:02}", i + 1)
}

/// Controls get scan1/scan2 differing only in noise; patients get M0 and an
/// M12 carrying their effects. Every session has its own noise seed.
pub fn make_cohort(
    cfg: &PhantomConfig,
    n_controls: usize,
    n_patients: usize,
    effects: &EffectSpec,
    seed: u64,
) -> Result<Cohort, PhantomError> {
    cfg.validate()?;
    if n_controls + n_patients == 0 {
        return Err(PhantomError::InvalidGeometry("cohort needs at least one subject".into()));
    }
    let patients: Vec<String> = (0..n_patients).map(patient_id).collect();
    let mut injected = Vec::new();
    for e in &effects.effects {
        if !patients.contains(&e.patient) {
            return Err(PhantomError::InvalidEffect(format!("unknown patient '{}'", e.patient)));
        }
        if !e.shift.is_finite() {
            return Err(PhantomError::InvalidEffect(format!("non-finite shift for {}", e.patient)));
        }
        let mut levels: Vec<Level> = e.levels.iter().flat_map(|l| l.constituents().iter().copied()).collect();
        levels.sort();
        levels.dedup();
        injected.push(InjectedEffect { patient: e.patient.clone(), metric: e.metric, shift: e.shift, levels });
    }

    let session_cfg = |group: u64, i: usize, s: usize| PhantomConfig { seed: derive_seed(seed, &[group, i as u64, s as u64]), ..cfg.clone() };
    let mut sessions = Vec::with_capacity(2 * (n_controls + n_patients));
    for i in 0..n_controls {
        for (s, name) in CONTROL_SESSIONS.iter().enumerate() {
            sessions.push(SessionSpec { subject: control_id(i), session: name.to_string(), group: Group::Control, config: session_cfg(0, i, s) });
        }
    }
    for (i, id) in patients.iter().enumerate() {
        let baseline = session_cfg(1, i, 0);
        let mut follow_up = session_cfg(1, i, 1);
        for e in injected.iter().filter(|e| &e.patient == id) {
            for level in &e.levels {
                let k = level.label().expect("vertebral level") as usize - 1;
                follow_up.levels[k] = follow_up.levels[k].shifted(e.metric, e.shift)?;
            }
        }
        sessions.push(SessionSpec { subject: id.clone(), session: PATIENT_SESSIONS[0].into(), group: Group::Patient, config: baseline });
        sessions.push(SessionSpec { subject: id.clone(), session: PATIENT_SESSIONS[1].into(), group: Group::Patient, config: follow_up });
    }
    Ok(Cohort { sessions, injected })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PhantomConfig {
        PhantomConfig { grid: [12, 12, 7], ..PhantomConfig::default() }
    }

    #[test]
    fn fa_md_construction() {
        for fa in [0.0, 0.3, 0.68, 0.8, 0.95] {
            let t = WmTruth::from_fa_md(fa, 1.0e-3, 1.0);
            assert!((t.metric(Metric::FA).unwrap() - fa).abs() < 1e-14, "{fa}");
            assert!((t.metric(Metric::MD).unwrap() - 1.0e-3).abs() < 1e-18);
        }
    }

    #[test]
    fn slabs_partition_slices() {
        assert_eq!(PhantomConfig::default().slab_sizes(), [3, 3, 2, 2, 2, 2, 2]);
        let cfg = PhantomConfig { grid: [8, 8, 7], ..PhantomConfig::default() };
        assert_eq!(cfg.slab_sizes(), [1; 7]);
        assert_eq!(cfg.slice_levels(), (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn geometry_errors() {
        let bad = [
            PhantomConfig { grid: [10, 10, 6], ..small() },
            PhantomConfig { wm_inner_radius: 7.0, ..small() },
            PhantomConfig { wm_inner_radius: 0.0, ..small() },
            PhantomConfig { cord_radius: 20.0, ..small() },
        ];
        for cfg in bad {
            assert!(matches!(make_phantom(&cfg), Err(PhantomError::InvalidGeometry(_))), "{:?}", cfg.grid);
        }
        let wrong_levels = PhantomConfig { levels: vec![WmTruth::from_fa_md(0.7, 1e-3, 1.0); 6], ..small() };
        assert!(matches!(make_phantom(&wrong_levels), Err(PhantomError::InvalidTruth(_))));
    }

    #[test]
    fn noiseless_pure_wm_matches_forward_model() {
        let cfg = small();
        let p = make_phantom(&cfg).unwrap();
        let axis = cfg.axis();
        let mut count = 0;
        for v in p.wm_pure_voxels() {
            let truth = cfg.levels[p.level_index(v)];
            for (k, (b, g)) in cfg.scheme.iter().enumerate() {
                assert_eq!(p.dwi.at(v, k), truth.signal(b, g, &axis));
            }
            count += 1;
        }
        assert!(count > 0);
    }

    #[test]
    fn boundary_voxels_mix_linearly() {
        let cfg = small();
        let p = make_phantom(&cfg).unwrap();
        let axis = cfg.axis();
        let mut checked = 0;
        for v in 0..p.dwi.n_voxels() {
            let [w, gm, csf] = p.fractions.at(v, 0);
            if !(w > 0.0 && w < 1.0) {
                continue;
            }
            assert!(gm == 0.0 || csf == 0.0, "annulus thicker than a voxel");
            let level = p.level_index(v);
            for (k, (b, g)) in cfg.scheme.iter().enumerate() {
                let other = if gm > 0.0 { cfg.gm_s0 * (-b * cfg.gm_md).exp() } else { cfg.csf_s0 * (-b * cfg.csf_diffusivity).exp() };
                let expect = w * cfg.levels[level].signal(b, g, &axis) + (1.0 - w) * other;
                assert!((p.dwi.at(v, k) - expect).abs() <= 1e-12 * expect.abs().max(1.0));
            }
            assert_eq!(p.atlas.wm_weight().at(v, 0), w);
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn atlas_matches_geometry() {
        let p = make_phantom(&small()).unwrap();
        assert_eq!(p.atlas.levels_present(), Level::VERTEBRAL.to_vec());
        for v in 0..p.dwi.n_voxels() {
            let f = p.fractions.at(v, 0);
            assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert_eq!(p.mask.at(v, 0), f[2] < 1.0);
            assert_eq!(p.atlas.labels().at(v, 0) > 0, p.mask.at(v, 0));
        }
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let cfg = PhantomConfig { snr: Some(20.0), seed: 7, ..small() };
        let a = make_phantom(&cfg).unwrap();
        let b = make_phantom(&cfg).unwrap();
        assert!(a.dwi.data().iter().zip(b.dwi.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = make_phantom(&PhantomConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.dwi.data(), c.dwi.data());
        assert!(a.dwi.data().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn ground_truth_is_analytic() {
        let cfg = PhantomConfig::default();
        let t = ground_truth_table(&cfg, "s", "x");
        assert_eq!(t.len(), 7 * 4);
        let fa: Vec<f64> = Level::VERTEBRAL.iter().map(|l| t.lookup("s", "x", *l, Metric::FA).unwrap()).collect();
        for (got, want) in fa.iter().zip([0.80, 0.78, 0.76, 0.74, 0.72, 0.70, 0.68]) {
            assert!((got - want).abs() < 1e-14);
        }
        let bs = PhantomConfig { levels: vec![WmTruth::BallStick { f_stick: 0.6, d: 1.5e-3, s0: 900.0 }; 7], ..cfg };
        let t = ground_truth_table(&bs, "s", "x");
        assert_eq!(t.lookup("s", "x", Level::C7, Metric::FWW), Some(1.0 - 0.6));
        assert_eq!(t.lookup("s", "x", Level::C7, Metric::ID), Some(1.5e-3));
        assert_eq!(t.len(), 14);
    }

    #[test]
    fn shifts_hold_partner_fixed() {
        let t = WmTruth::from_fa_md(0.7, 1.0e-3, 1.0);
        let s = t.shifted(Metric::FA, -0.05).unwrap();
        assert!((s.metric(Metric::FA).unwrap() - 0.65).abs() < 1e-14);
        assert!((s.metric(Metric::MD).unwrap() - 1.0e-3).abs() < 1e-18);
        let s = t.shifted(Metric::AD, 1e-4).unwrap();
        assert_eq!(s.metric(Metric::RD), t.metric(Metric::RD));
        let b = WmTruth::BallStick { f_stick: 0.7, d: 1.2e-3, s0: 1.0 };
        assert!((b.shifted(Metric::FWW, 0.1).unwrap().metric(Metric::FWW).unwrap() - 0.4).abs() < 1e-15);
        assert!(matches!(b.shifted(Metric::FA, 0.1), Err(PhantomError::InvalidEffect(_))));
        assert!(matches!(b.shifted(Metric::FWW, 0.8), Err(PhantomError::InvalidEffect(_))));
    }

    #[test]
    fn cohort_structure() {
        let spec = EffectSpec {
            effects: vec![Effect { patient: "P02".into(), metric: Metric::FA, shift: -0.05, levels: vec![Level::C3C5] }],
        };
        let cohort = make_cohort(&small(), 8, 3, &spec, 11).unwrap();
        assert_eq!(cohort.sessions.iter().filter(|s| s.group == Group::Control).count(), 16);
        assert_eq!(cohort.sessions.len(), 22);
        assert_eq!(cohort.injected[0].levels, vec![Level::C3, Level::C4, Level::C5]);
        let seeds: std::collections::BTreeSet<u64> = cohort.sessions.iter().map(|s| s.config.seed).collect();
        assert_eq!(seeds.len(), 22);

        let find = |subject: &str, session: &str| cohort.sessions.iter().find(|s| s.subject == subject && s.session == session).unwrap();
        let (m0, m12) = (find("P02", "M0"), find("P02", "M12"));
        for (k, level) in Level::VERTEBRAL.iter().enumerate() {
            let d = m12.config.levels[k].metric(Metric::FA).unwrap() - m0.config.levels[k].metric(Metric::FA).unwrap();
            let expect = if matches!(level, Level::C3 | Level::C4 | Level::C5) { -0.05 } else { 0.0 };
            assert!((d - expect).abs() < 1e-14);
        }
        assert_eq!(find("P01", "M0").config.levels, find("P01", "M12").config.levels);
        assert_eq!(find("C03", "scan1").config.levels, find("C03", "scan2").config.levels);
        assert_eq!(m12.ground_truth().subjects().into_iter().collect::<Vec<_>>(), ["P02"]);

        let unknown = EffectSpec { effects: vec![Effect { patient: "P09".into(), ..spec.effects[0].clone() }] };
        assert!(matches!(make_cohort(&small(), 8, 3, &unknown, 11), Err(PhantomError::InvalidEffect(_))));
    }
}
