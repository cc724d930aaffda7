//! FSL-style gradient tables: a `.bval` row of b-values and a `.bvec` file
//! with three rows (x, y, z) of directions.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::linalg::{normalize, Vec3};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum GradientError {
    #[error("bval lists {bvals} entries but bvec lists {bvecs}")]
    CountMismatch { bvals: usize, bvecs: usize },
    #[error("measurement {index} has b = {bval} but a zero direction")]
    ZeroDirection { index: usize, bval: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-measurement b-values (s/mm²) and unit gradient directions.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientScheme<T = f64> {
    pub bvals: Vec<T>,
    pub dirs: Vec<Vec3<T>>,
}

impl<T: Real> GradientScheme<T> {
    /// Builds a scheme, renormalizing every direction whose b-value is positive.
    /// Directions already unit to a few ulps are kept bit for bit.
    pub fn new(bvals: Vec<T>, dirs: Vec<Vec3<T>>) -> Result<Self, GradientError> {
        if bvals.len() != dirs.len() {
            return Err(GradientError::CountMismatch { bvals: bvals.len(), bvecs: dirs.len() });
        }
        let mut out = Vec::with_capacity(dirs.len());
        for (i, (b, g)) in bvals.iter().zip(dirs.iter()).enumerate() {
            if *b < T::zero() || !b.is_finite() {
                return Err(GradientError::Parse(format!("invalid b-value {b} at {i}")));
            }
            if *b > T::zero() {
                let unit = normalize(g).ok_or(GradientError::ZeroDirection { index: i, bval: b.as_f64() })?;
                let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                out.push(if (norm - T::one()).abs() <= T::lit(4.0) * T::epsilon() { *g } else { unit });
            } else {
                out.push(*g);
            }
        }
        Ok(Self { bvals, dirs: out })
    }

    pub fn len(&self) -> usize {
        self.bvals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bvals.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (T, &Vec3<T>)> + '_ {
        self.bvals.iter().copied().zip(self.dirs.iter())
    }

    pub fn b0_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bvals.iter().enumerate().filter(|(_, b)| **b == T::zero()).map(|(i, _)| i)
    }

    pub fn cast<U: Real>(&self) -> GradientScheme<U> {
        let c = |v: T| U::lit(v.as_f64());
        GradientScheme {
            bvals: self.bvals.iter().map(|b| c(*b)).collect(),
            dirs: self.dirs.iter().map(|g| [c(g[0]), c(g[1]), c(g[2])]).collect(),
        }
    }

    /// `n_b0` unweighted measurements followed by `n_dirs` directions on a
    /// Fibonacci spiral over the upper hemisphere, all at `bval`.
    pub fn spiral_shell(n_b0: usize, n_dirs: usize, bval: T) -> Self {
        let mut bvals = vec![T::zero(); n_b0];
        let mut dirs = vec![[T::zero(); 3]; n_b0];
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        for k in 0..n_dirs {
            let z = 1.0 - (k as f64 + 0.5) / n_dirs as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            bvals.push(bval);
            dirs.push([T::lit(r * phi.cos()), T::lit(r * phi.sin()), T::lit(z)]);
        }
        Self::new(bvals, dirs).expect("spiral directions are non-zero")
    }
}

impl GradientScheme<f64> {
    /// Six b = 0 measurements followed by thirty directions at b = 900 s/mm².
    pub fn default_protocol() -> Self {
        Self::spiral_shell(6, 30, 900.0)
    }
}

fn parse_row(line: &str, what: &str) -> Result<Vec<f64>, GradientError> {
    line.split_whitespace()
        .map(|tok| tok.parse::<f64>().map_err(|e| GradientError::Parse(format!("{what}: '{tok}': {e}"))))
        .collect()
}

pub fn parse_gradient_table(bval_text: &str, bvec_text: &str) -> Result<GradientScheme<f64>, GradientError> {
    let bval_rows: Vec<&str> = bval_text.lines().filter(|l| !l.trim().is_empty()).collect();
    if bval_rows.len() != 1 {
        return Err(GradientError::Parse(format!("bval must be one row, found {}", bval_rows.len())));
    }
    let bvals = parse_row(bval_rows[0], "bval")?;
    let rows: Vec<Vec<f64>> = bvec_text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse_row(l, "bvec"))
        .collect::<Result<_, _>>()?;
    if rows.len() != 3 {
        return Err(GradientError::Parse(format!("bvec must have three rows, found {}", rows.len())));
    }
    for row in &rows {
        if row.len() != bvals.len() {
            return Err(GradientError::CountMismatch { bvals: bvals.len(), bvecs: row.len() });
        }
    }
    let dirs = (0..bvals.len()).map(|i| [rows[0][i], rows[1][i], rows[2][i]]).collect();
    GradientScheme::new(bvals, dirs)
}

pub fn read_gradient_table(bval_path: &Path, bvec_path: &Path) -> Result<GradientScheme<f64>, GradientError> {
    parse_gradient_table(&fs::read_to_string(bval_path)?, &fs::read_to_string(bvec_path)?)
}

/// Values are written with shortest round-trip formatting.
pub fn format_gradient_table(scheme: &GradientScheme<f64>) -> (String, String) {
    let join = |it: &mut dyn Iterator<Item = f64>| it.map(|v| format!("{v}")).collect::<Vec<_>>().join(" ");
    let bval = format!("{}\n", join(&mut scheme.bvals.iter().copied()));
    let bvec = (0..3)
        .map(|axis| join(&mut scheme.dirs.iter().map(|g| g[axis])))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n";
    (bval, bvec)
}

pub fn write_gradient_table(scheme: &GradientScheme<f64>, bval_path: &Path, bvec_path: &Path) -> Result<(), GradientError> {
    let (bval, bvec) = format_gradient_table(scheme);
    fs::write(bval_path, bval)?;
    fs::write(bvec_path, bvec)?;
    Ok(())
}
