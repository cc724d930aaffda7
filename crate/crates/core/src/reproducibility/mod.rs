//! Bland-Altman agreement on control scan/rescan pairs and classification of
//! patient longitudinal differences against the control limits.

mod svg;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::io::{format_roundtrip, Level, Metric, MetricTable, TableError};
use crate::scalar::Real;

pub use svg::{bland_altman_svg, render_bland_altman_svg, write_bland_altman_svg, Panel, PatientPoint};

/// Multiplier of the difference standard deviation for the 95% limits.
pub const LOA_Z: f64 = 1.96;
/// Differences this close to a limit are treated as on it (inside).
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ReproError {
    #[error("{n} pair(s) for ({metric}, {level}); at least 3 are needed")]
    TooFewPairs { metric: Metric, level: Level, n: usize },
    #[error("session mismatch for {subject}: {detail}")]
    SessionMismatch { subject: String, detail: String },
    #[error("no agreement model for level {0}")]
    NoModel(Level),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for ReproError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => ReproError::Io(io),
            other => ReproError::Parse(format!("{other:?}")),
        }
    }
}

/// Scan/rescan agreement for one (metric, level).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgreementModel<T = f64> {
    pub metric: Metric,
    pub level: Level,
    /// Mean of scan2 − scan1.
    pub bias: T,
    /// Sample (n − 1) standard deviation of the differences.
    pub sd_diff: T,
    pub loa_low: T,
    pub loa_high: T,
    pub n_controls: usize,
}

/// Coordinates of one pair on a Bland-Altman plot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotPoint<T = f64> {
    pub mean: T,
    pub diff: T,
}

impl<T: Real> PlotPoint<T> {
    pub fn from_pair(first: T, second: T) -> Self {
        Self { mean: (first + second) / T::lit(2.0), diff: second - first }
    }
}

/// Bias, sample sd and limits bias ± 1.96·sd of `second − first`.
///
/// Differences are summed in sorted order, so the result does not depend on
/// the order of `pairs`.
pub fn bland_altman<T: Real>(
    metric: Metric,
    level: Level,
    pairs: &[(T, T)],
) -> Result<(AgreementModel<T>, Vec<PlotPoint<T>>), ReproError> {
    let n = pairs.len();
    if n < 3 {
        return Err(ReproError::TooFewPairs { metric, level, n });
    }
    let points: Vec<PlotPoint<T>> = pairs.iter().map(|(a, b)| PlotPoint::from_pair(*a, *b)).collect();
    let mut d: Vec<T> = points.iter().map(|p| p.diff).collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let bias = d.iter().fold(T::zero(), |s, x| s + *x) / T::from_usize_lossy(n);
    let ss = d.iter().fold(T::zero(), |s, x| s + (*x - bias) * (*x - bias));
    let sd_diff = (ss / T::from_usize_lossy(n - 1)).sqrt();
    let half = T::lit(LOA_Z) * sd_diff;
    let model = AgreementModel { metric, level, bias, sd_diff, loa_low: bias - half, loa_high: bias + half, n_controls: n };
    Ok((model, points))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Verdict {
    SignificantDecrease,
    NSV,
    SignificantIncrease,
}

impl Verdict {
    pub fn is_significant(self) -> bool {
        self != Verdict::NSV
    }

    pub fn name(self) -> &'static str {
        match self {
            Verdict::SignificantDecrease => "SignificantDecrease",
            Verdict::NSV => "NSV",
            Verdict::SignificantIncrease => "SignificantIncrease",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Verdict {
    type Err = ReproError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Verdict::SignificantDecrease, Verdict::NSV, Verdict::SignificantIncrease]
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ReproError::Parse(format!("unknown verdict '{s}'")))
    }
}

/// Outside the limits is significant; on a limit (within 1e-12) is not.
pub fn classify_change<T: Real>(diff: T, model: &AgreementModel<T>) -> Verdict {
    let tol = |limit: T| T::lit(BOUNDARY_TOLERANCE) * limit.abs().max(T::one());
    if diff > model.loa_high + tol(model.loa_high) {
        Verdict::SignificantIncrease
    } else if diff < model.loa_low - tol(model.loa_low) {
        Verdict::SignificantDecrease
    } else {
        Verdict::NSV
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeClassification {
    pub patient: String,
    pub metric: Metric,
    pub level: Level,
    /// M12 − M0.
    pub diff: f64,
    /// (M0 + M12) / 2, the plot abscissa.
    pub mean: f64,
    pub verdict: Verdict,
}

/// Subject → value at (level, metric), requiring one session per subject.
fn session_values(table: &MetricTable, level: Level, metric: Metric) -> Result<BTreeMap<String, f64>, ReproError> {
    let mut out: BTreeMap<String, (String, f64)> = BTreeMap::new();
    for (k, v) in table.iter().filter(|(k, _)| k.level == level && k.metric == metric) {
        if let Some((session, _)) = out.get(&k.subject) {
            return Err(ReproError::SessionMismatch {
                subject: k.subject.clone(),
                detail: format!("sessions '{session}' and '{}' in one table", k.session),
            });
        }
        out.insert(k.subject.clone(), (k.session.clone(), v));
    }
    Ok(out.into_iter().map(|(s, (_, v))| (s, v)).collect())
}

/// Subjects with a value in exactly one of the two tables are an error.
fn paired_values(a: &MetricTable, b: &MetricTable, level: Level, metric: Metric) -> Result<Vec<(String, f64, f64)>, ReproError> {
    let va = session_values(a, level, metric)?;
    let vb = session_values(b, level, metric)?;
    let subjects: BTreeSet<&String> = va.keys().chain(vb.keys()).collect();
    subjects
        .into_iter()
        .map(|s| match (va.get(s), vb.get(s)) {
            (Some(x), Some(y)) => Ok((s.clone(), *x, *y)),
            (first, _) => Err(ReproError::SessionMismatch {
                subject: s.clone(),
                detail: format!("{metric} at {level} only in the {} table", if first.is_some() { "first" } else { "second" }),
            }),
        })
        .collect()
}

/// One agreement model per metric present at `level` in the scan1 table.
pub fn calibrate(
    scan1: &MetricTable,
    scan2: &MetricTable,
    level: Level,
) -> Result<Vec<(AgreementModel, Vec<PlotPoint>)>, ReproError> {
    let metrics: BTreeSet<Metric> =
        scan1.iter().chain(scan2.iter()).filter(|(k, _)| k.level == level).map(|(k, _)| k.metric).collect();
    if metrics.is_empty() {
        return Err(ReproError::TooFewPairs { metric: Metric::FA, level, n: 0 });
    }
    metrics
        .into_iter()
        .map(|metric| {
            let pairs: Vec<(f64, f64)> = paired_values(scan1, scan2, level, metric)?.into_iter().map(|(_, a, b)| (a, b)).collect();
            bland_altman(metric, level, &pairs)
        })
        .collect()
}

/// Classifies M12 − M0 for every patient and every model at `level`, keeping
/// patients with at least `min_significant` significant metrics.
pub fn patient_evolution_table(
    m0: &MetricTable,
    m12: &MetricTable,
    models: &[AgreementModel],
    level: Level,
    min_significant: usize,
) -> Result<Vec<ChangeClassification>, ReproError> {
    let models: Vec<&AgreementModel> = models.iter().filter(|m| m.level == level).collect();
    if models.is_empty() {
        return Err(ReproError::NoModel(level));
    }
    let mut rows = Vec::new();
    for model in models {
        for (patient, a, b) in paired_values(m0, m12, level, model.metric)? {
            let diff = b - a;
            rows.push(ChangeClassification {
                patient,
                metric: model.metric,
                level,
                diff,
                mean: (a + b) / 2.0,
                verdict: classify_change(diff, model),
            });
        }
    }
    let mut significant: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rows {
        *significant.entry(r.patient.as_str()).or_default() += r.verdict.is_significant() as usize;
    }
    let keep: BTreeSet<String> =
        significant.into_iter().filter(|(_, k)| *k >= min_significant).map(|(p, _)| p.to_string()).collect();
    rows.retain(|r| keep.contains(&r.patient));
    rows.sort_by(|a, b| (&a.patient, a.metric).cmp(&(&b.patient, b.metric)));
    Ok(rows)
}

pub fn models_to_csv(models: &[AgreementModel]) -> String {
    let mut out = String::from("metric,level,bias,sd_diff,loa_low,loa_high,n\n");
    for m in models {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            m.metric,
            m.level,
            format_roundtrip(m.bias),
            format_roundtrip(m.sd_diff),
            format_roundtrip(m.loa_low),
            format_roundtrip(m.loa_high),
            m.n_controls
        ));
    }
    out
}

fn parse_f64(field: &str, what: &str) -> Result<f64, ReproError> {
    field.parse().map_err(|e| ReproError::Parse(format!("{what} '{field}': {e}")))
}

fn check_header(rdr: &mut csv::Reader<impl std::io::Read>, expected: &[&str]) -> Result<(), ReproError> {
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(ReproError::Parse(format!("expected header {}, found {:?}", expected.join(","), headers)));
    }
    Ok(())
}

pub fn models_from_csv<R: std::io::Read>(reader: R) -> Result<Vec<AgreementModel>, ReproError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, &["metric", "level", "bias", "sd_diff", "loa_low", "loa_high", "n"])?;
    let mut models = Vec::new();
    for record in rdr.records() {
        let r = record?;
        let f = |i: usize| r.get(i).unwrap_or("");
        let model = AgreementModel {
            metric: f(0).parse()?,
            level: f(1).parse()?,
            bias: parse_f64(f(2), "bias")?,
            sd_diff: parse_f64(f(3), "sd_diff")?,
            loa_low: parse_f64(f(4), "loa_low")?,
            loa_high: parse_f64(f(5), "loa_high")?,
            n_controls: f(6).parse().map_err(|e| ReproError::Parse(format!("n '{}': {e}", f(6))))?,
        };
        if !(model.loa_low <= model.bias && model.bias <= model.loa_high) || model.sd_diff < 0.0 {
            return Err(ReproError::Parse(format!("inconsistent limits for ({}, {})", model.metric, model.level)));
        }
        models.push(model);
    }
    Ok(models)
}

pub fn read_models(path: &Path) -> Result<Vec<AgreementModel>, ReproError> {
    models_from_csv(std::fs::File::open(path)?)
}

pub fn write_models(models: &[AgreementModel], path: &Path) -> Result<(), ReproError> {
    std::fs::write(path, models_to_csv(models))?;
    Ok(())
}

pub fn classifications_to_csv(rows: &[ChangeClassification]) -> String {
    let mut out = String::from("patient,metric,level,diff,verdict\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.patient, r.metric, r.level, format_roundtrip(r.diff), r.verdict));
    }
    out
}

/// The plot abscissa is not stored; it reads back as NaN.
pub fn classifications_from_csv<R: std::io::Read>(reader: R) -> Result<Vec<ChangeClassification>, ReproError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, &["patient", "metric", "level", "diff", "verdict"])?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let r = record?;
        let f = |i: usize| r.get(i).unwrap_or("");
        rows.push(ChangeClassification {
            patient: f(0).to_string(),
            metric: f(1).parse()?,
            level: f(2).parse()?,
            diff: parse_f64(f(3), "diff")?,
            mean: f64::NAN,
            verdict: f(4).parse()?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::RowKey;
    use proptest::prelude::*;

    fn model(lo: f64, hi: f64) -> AgreementModel {
        AgreementModel {
            metric: Metric::AD,
            level: Level::C3C5,
            bias: (lo + hi) / 2.0,
            sd_diff: (hi - lo) / (2.0 * LOA_Z),
            loa_low: lo,
            loa_high: hi,
            n_controls: 8,
        }
    }

    #[test]
    fn constant_offset() {
        let (m, pts) = bland_altman(Metric::FA, Level::C3C5, &[(1.0, 2.0), (2.0, 3.0), (3.0, 4.0)]).unwrap();
        assert_eq!((m.bias, m.sd_diff, m.loa_low, m.loa_high), (1.0, 0.0, 1.0, 1.0));
        assert_eq!(pts[1], PlotPoint { mean: 2.5, diff: 1.0 });
    }

    #[test]
    fn hand_computed_limits() {
        let (m, _) = bland_altman(Metric::FA, Level::C3C5, &[(0.0f64, 0.0), (0.0, 1.0), (0.0, 2.0)]).unwrap();
        assert!((m.bias - 1.0).abs() < 1e-12);
        assert!((m.sd_diff - 1.0).abs() < 1e-12);
        assert!((m.loa_low + 0.96).abs() < 1e-12);
        assert!((m.loa_high - 2.96).abs() < 1e-12);
        assert_eq!(m.n_controls, 3);
    }

    #[test]
    fn too_few_pairs() {
        assert!(matches!(
            bland_altman(Metric::FA, Level::C3, &[(0.0, 1.0), (1.0, 1.0)]),
            Err(ReproError::TooFewPairs { n: 2, .. })
        ));
    }

    #[test]
    fn single_precision() {
        let (m, _) = bland_altman(Metric::FA, Level::C3C5, &[(0.0f32, 0.0), (0.0, 1.0), (0.0, 2.0)]).unwrap();
        assert!((m.loa_high - 2.96).abs() < 1e-6);
    }

    #[test]
    fn verdicts() {
        let m = model(-0.5e-3, 0.5e-3);
        assert_eq!(classify_change(m.bias, &m), Verdict::NSV);
        assert_eq!(classify_change(0.712e-3, &m), Verdict::SignificantIncrease);
        assert_eq!(classify_change(-0.712e-3, &m), Verdict::SignificantDecrease);
        assert_eq!(classify_change(m.loa_high, &m), Verdict::NSV);
        assert_eq!(classify_change(m.loa_low, &m), Verdict::NSV);
        assert_eq!(classify_change(m.loa_high + 5e-13, &m), Verdict::NSV);
    }

    fn session_table(session: &str, rows: &[(&str, Metric, f64)]) -> MetricTable {
        let mut t = MetricTable::new();
        for (s, m, v) in rows {
            t.insert(RowKey::new(*s, session, Level::C3C5, *m), *v).unwrap();
        }
        t
    }

    #[test]
    fn identical_sessions_all_nsv() {
        let rows = [("P01", Metric::FA, 0.7), ("P02", Metric::FA, 0.65)];
        let (m0, m12) = (session_table("M0", &rows), session_table("M12", &rows));
        let mut fa = model(-0.01, 0.01);
        fa.metric = Metric::FA;
        let all = patient_evolution_table(&m0, &m12, &[fa], Level::C3C5, 0).unwrap();
        assert_eq!(all.len(), 2);
        assert!(all.iter().all(|r| r.verdict == Verdict::NSV && r.diff == 0.0));
        assert!(patient_evolution_table(&m0, &m12, &[fa], Level::C3C5, 1).unwrap().is_empty());
    }

    #[test]
    fn anticorrelated_fa_fww_patient_retained() {
        let m0 = session_table("M0", &[("P01", Metric::FA, 0.70), ("P01", Metric::FWW, 0.30), ("P02", Metric::FA, 0.70), ("P02", Metric::FWW, 0.30)]);
        let m12 = session_table("M12", &[("P01", Metric::FA, 0.62), ("P01", Metric::FWW, 0.42), ("P02", Metric::FA, 0.705), ("P02", Metric::FWW, 0.30)]);
        let mut fa = model(-0.02, 0.02);
        fa.metric = Metric::FA;
        let mut fww = model(-0.03, 0.03);
        fww.metric = Metric::FWW;
        let rows = patient_evolution_table(&m0, &m12, &[fa, fww], Level::C3C5, 2).unwrap();
        let verdicts: Vec<(&str, Metric, Verdict)> = rows.iter().map(|r| (r.patient.as_str(), r.metric, r.verdict)).collect();
        assert_eq!(
            verdicts,
            [("P01", Metric::FA, Verdict::SignificantDecrease), ("P01", Metric::FWW, Verdict::SignificantIncrease)]
        );
    }

    #[test]
    fn missing_follow_up_is_session_mismatch() {
        let m0 = session_table("M0", &[("P01", Metric::FA, 0.7), ("P02", Metric::FA, 0.7)]);
        let m12 = session_table("M12", &[("P01", Metric::FA, 0.7)]);
        let mut fa = model(-0.01, 0.01);
        fa.metric = Metric::FA;
        assert!(matches!(
            patient_evolution_table(&m0, &m12, &[fa], Level::C3C5, 1),
            Err(ReproError::SessionMismatch { subject, .. }) if subject == "P02"
        ));
        assert!(matches!(patient_evolution_table(&m0, &m12, &[fa], Level::C4, 1), Err(ReproError::NoModel(Level::C4))));
    }

    #[test]
    fn calibrate_pairs_subjects() {
        let s1 = session_table("scan1", &[("C01", Metric::MD, 1.0), ("C02", Metric::MD, 2.0), ("C03", Metric::MD, 3.0)]);
        let s2 = session_table("scan2", &[("C01", Metric::MD, 1.0), ("C02", Metric::MD, 3.0), ("C03", Metric::MD, 5.0)]);
        let models = calibrate(&s1, &s2, Level::C3C5).unwrap();
        assert_eq!(models.len(), 1);
        assert!((models[0].0.bias - 1.0).abs() < 1e-15);
        assert!((models[0].0.loa_high - 2.96).abs() < 1e-12);
    }

    #[test]
    fn csv_roundtrips() {
        let models = vec![model(-0.96, 2.96), model(-1e-4, 3e-4)];
        assert_eq!(models_from_csv(models_to_csv(&models).as_bytes()).unwrap(), models);
        let rows = vec![ChangeClassification {
            patient: "P04".into(),
            metric: Metric::AD,
            level: Level::C3C5,
            diff: 0.712e-3,
            mean: 1.5e-3,
            verdict: Verdict::SignificantIncrease,
        }];
        let text = classifications_to_csv(&rows);
        assert_eq!(text, "patient,metric,level,diff,verdict\nP04,AD,C3C5,0.000712,SignificantIncrease\n");
        let back = classifications_from_csv(text.as_bytes()).unwrap();
        assert_eq!((back[0].diff, back[0].verdict), (rows[0].diff, rows[0].verdict));
        assert!(models_from_csv("metric,level\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn limits_width_and_order(pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..20)) {
            let (m, _) = bland_altman(Metric::MD, Level::C3C5, &pairs).unwrap();
            prop_assert!(m.loa_low <= m.bias && m.bias <= m.loa_high);
            prop_assert!(((m.loa_high - m.loa_low) - 2.0 * LOA_Z * m.sd_diff).abs() < 1e-12);
        }

        #[test]
        fn reordering_is_bitwise_invariant(pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..20), rot in 0usize..20) {
            let mut shuffled = pairs.clone();
            shuffled.reverse();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            let (a, _) = bland_altman(Metric::MD, Level::C3C5, &pairs).unwrap();
            let (b, _) = bland_altman(Metric::MD, Level::C3C5, &shuffled).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn swapping_sessions_mirrors(pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..20)) {
            let swapped: Vec<(f64, f64)> = pairs.iter().map(|(a, b)| (*b, *a)).collect();
            let (a, _) = bland_altman(Metric::MD, Level::C3C5, &pairs).unwrap();
            let (b, _) = bland_altman(Metric::MD, Level::C3C5, &swapped).unwrap();
            prop_assert!((a.bias + b.bias).abs() < 1e-12);
            prop_assert!((a.loa_high + b.loa_low).abs() < 1e-12);
            prop_assert!((a.loa_low + b.loa_high).abs() < 1e-12);
        }

        #[test]
        fn affine_consistency(
            pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..20),
            diffs in prop::collection::vec(-3.0f64..3.0, 1..10),
            c in 1e-4f64..1e3,
        ) {
            let scaled: Vec<(f64, f64)> = pairs.iter().map(|(a, b)| (a * c, b * c)).collect();
            let (a, _) = bland_altman(Metric::MD, Level::C3C5, &pairs).unwrap();
            let (b, _) = bland_altman(Metric::MD, Level::C3C5, &scaled).unwrap();
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * c * (1.0 + x.abs() / c);
            prop_assert!(close(a.bias * c, b.bias) && close(a.sd_diff * c, b.sd_diff));
            prop_assert!(close(a.loa_low * c, b.loa_low) && close(a.loa_high * c, b.loa_high));
            for d in diffs {
                let margin = (d - a.loa_high).abs().min((d - a.loa_low).abs());
                prop_assume!(margin > 1e-9);
                prop_assert_eq!(classify_change(d, &a), classify_change(d * c, &b));
            }
        }

        #[test]
        fn classification_is_monotone(lo in -1.0f64..0.0, width in 0.0f64..2.0, mut ds in prop::collection::vec(-3.0f64..3.0, 2..30)) {
            let m = model(lo, lo + width);
            ds.sort_by(f64::total_cmp);
            let verdicts: Vec<Verdict> = ds.iter().map(|d| classify_change(*d, &m)).collect();
            prop_assert!(verdicts.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
