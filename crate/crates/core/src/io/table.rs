//! Per-level metric tables, serialized as CSV `subject,session,level,metric,value`
//! with values in shortest round-trip notation.
//! Diffusivities are stored in mm²/s; any ×10³ scaling is presentation only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("duplicate row for {0}")]
    DuplicateKey(RowKey),
    #[error("unknown level '{0}'")]
    UnknownLevel(String),
    #[error("unknown metric '{0}'")]
    UnknownMetric(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{key}: value {value} outside the valid range")]
    OutOfRange { key: RowKey, value: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for TableError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => TableError::Io(io),
            other => TableError::Parse(format!("{other:?}")),
        }
    }
}

/// Cervical vertebral levels plus the two pooled ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C1C7,
    C3C5,
}

impl Level {
    pub const VERTEBRAL: [Level; 7] = [Level::C1, Level::C2, Level::C3, Level::C4, Level::C5, Level::C6, Level::C7];
    pub const ALL: [Level; 9] = [
        Level::C1,
        Level::C2,
        Level::C3,
        Level::C4,
        Level::C5,
        Level::C6,
        Level::C7,
        Level::C1C7,
        Level::C3C5,
    ];

    /// Atlas label (1..=7) of a single vertebral level.
    pub fn label(self) -> Option<u8> {
        Level::VERTEBRAL.iter().position(|l| *l == self).map(|i| i as u8 + 1)
    }

    pub fn from_label(label: u8) -> Option<Level> {
        (1..=7).contains(&label).then(|| Level::VERTEBRAL[label as usize - 1])
    }

    /// Constituent vertebral levels of a pooled range.
    pub fn constituents(self) -> &'static [Level] {
        let all: &'static [Level; 7] = &Level::VERTEBRAL;
        match self {
            Level::C1C7 => all,
            Level::C3C5 => &all[2..5],
            single => {
                let i = single.label().expect("vertebral level") as usize - 1;
                &all[i..i + 1]
            }
        }
    }

    pub fn is_pooled(self) -> bool {
        matches!(self, Level::C1C7 | Level::C3C5)
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::C1 => "C1",
            Level::C2 => "C2",
            Level::C3 => "C3",
            Level::C4 => "C4",
            Level::C5 => "C5",
            Level::C6 => "C6",
            Level::C7 => "C7",
            Level::C1C7 => "C1C7",
            Level::C3C5 => "C3C5",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Level {
    type Err = TableError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Level::ALL
            .iter()
            .find(|l| l.name().eq_ignore_ascii_case(s.trim()))
            .copied()
            .ok_or_else(|| TableError::UnknownLevel(s.to_string()))
    }
}

/// Diffusion metrics, in the row order of the cross-subject dispersion table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Metric {
    AD,
    FA,
    RD,
    MD,
    ID,
    FWW,
}

impl Metric {
    pub const ALL: [Metric; 6] = [Metric::AD, Metric::FA, Metric::RD, Metric::MD, Metric::ID, Metric::FWW];
    pub const DTI: [Metric; 4] = [Metric::FA, Metric::MD, Metric::AD, Metric::RD];
    pub const BALLSTICK: [Metric; 2] = [Metric::ID, Metric::FWW];

    /// FA and FWW are unitless fractions in [0, 1].
    pub fn is_fraction(self) -> bool {
        matches!(self, Metric::FA | Metric::FWW)
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::AD => "AD",
            Metric::FA => "FA",
            Metric::RD => "RD",
            Metric::MD => "MD",
            Metric::ID => "ID",
            Metric::FWW => "FWW",
        }
    }

    /// Lower-case file stem used for metric volumes.
    pub fn file_stem(self) -> &'static str {
        match self {
            Metric::AD => "ad",
            Metric::FA => "fa",
            Metric::RD => "rd",
            Metric::MD => "md",
            Metric::ID => "id",
            Metric::FWW => "fww",
        }
    }

    pub fn unit(self) -> &'static str {
        if self.is_fraction() {
            ""
        } else {
            "mm²/s"
        }
    }

    /// Clamps into the metric's physical range.
    pub fn clamp(self, v: f64) -> f64 {
        if self.is_fraction() {
            v.clamp(0.0, 1.0)
        } else {
            v.max(0.0)
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = TableError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .copied()
            .ok_or_else(|| TableError::UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowKey {
    pub subject: String,
    pub session: String,
    pub level: Level,
    pub metric: Metric,
}

impl RowKey {
    pub fn new(subject: impl Into<String>, session: impl Into<String>, level: Level, metric: Metric) -> Self {
        Self { subject: subject.into(), session: session.into(), level, metric }
    }
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.subject, self.session, self.level, self.metric)
    }
}

/// Rows keyed by (subject, session, level, metric), iterated in key order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTable {
    rows: BTreeMap<RowKey, f64>,
}

impl MetricTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: RowKey, value: f64) -> Result<(), TableError> {
        if !value.is_finite() {
            return Err(TableError::Parse(format!("{key}: non-finite value")));
        }
        if self.rows.contains_key(&key) {
            return Err(TableError::DuplicateKey(key));
        }
        self.rows.insert(key, value);
        Ok(())
    }

    pub fn get(&self, key: &RowKey) -> Option<f64> {
        self.rows.get(key).copied()
    }

    pub fn lookup(&self, subject: &str, session: &str, level: Level, metric: Metric) -> Option<f64> {
        self.get(&RowKey::new(subject, session, level, metric))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RowKey, f64)> + '_ {
        self.rows.iter().map(|(k, v)| (k, *v))
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.rows.keys().map(|k| k.subject.as_str()).collect()
    }

    pub fn metrics(&self) -> BTreeSet<Metric> {
        self.rows.keys().map(|k| k.metric).collect()
    }

    /// Merges another table, rejecting key collisions.
    pub fn extend(&mut self, other: &MetricTable) -> Result<(), TableError> {
        for (k, v) in other.iter() {
            self.insert(k.clone(), v)?;
        }
        Ok(())
    }

    /// Fractions must lie in [0, 1] and diffusivities be non-negative.
    /// Difference tables legitimately violate this and are not checked on read.
    pub fn check_ranges(&self) -> Result<(), TableError> {
        for (k, v) in self.iter() {
            if k.metric.clamp(v) != v {
                return Err(TableError::OutOfRange { key: k.clone(), value: v });
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("subject,session,level,metric,value\n");
        for (k, v) in self.iter() {
            out.push_str(&format!("{},{},{},{},{}\n", k.subject, k.session, k.level, k.metric, format_roundtrip(v)));
        }
        out
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self, TableError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["subject", "session", "level", "metric", "value"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(TableError::Parse(format!("expected header {}, found {:?}", expected.join(","), headers)));
        }
        let mut table = MetricTable::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let field = |i: usize| record.get(i).unwrap_or("");
            let level: Level = field(2).parse()?;
            let metric: Metric = field(3).parse()?;
            let value: f64 = field(4)
                .parse()
                .map_err(|e| TableError::Parse(format!("row {}: value '{}': {e}", line + 2, field(4))))?;
            table.insert(RowKey::new(field(0), field(1), level, metric), value)?;
        }
        Ok(table)
    }

    pub fn read(path: &Path) -> Result<Self, TableError> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), TableError> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_roundtrip(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Decimal text with `digits` significant digits, fixed notation for
/// moderate exponents and scientific otherwise, trailing zeros trimmed.
pub fn format_significant(v: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digit_str: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let sign = if negative { "-" } else { "" };

    if (-5..digits as i32).contains(&exp) {
        let (int_part, frac_part) = if exp >= 0 {
            let split = exp as usize + 1;
            (digit_str[..split].to_string(), digit_str[split..].to_string())
        } else {
            ("0".to_string(), "0".repeat((-exp - 1) as usize) + &digit_str)
        };
        let frac = frac_part.trim_end_matches('0');
        if frac.is_empty() {
            format!("{sign}{int_part}")
        } else {
            format!("{sign}{int_part}.{frac}")
        }
    } else {
        let frac = digit_str[1..].trim_end_matches('0');
        if frac.is_empty() {
            format!("{sign}{}e{exp}", &digit_str[..1])
        } else {
            format!("{sign}{}.{frac}e{exp}", &digit_str[..1])
        }
    }
}
