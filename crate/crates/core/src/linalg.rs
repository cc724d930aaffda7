//! Small dense linear algebra: 3-vectors, packed symmetric 3×3 matrices,
//! Householder least squares and Cholesky solves for the per-voxel fits.

use crate::scalar::Real;

pub type Vec3<T> = [T; 3];

#[inline]
pub fn dot<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm<T: Real>(a: &Vec3<T>) -> T {
    dot(a, a).sqrt()
}

#[inline]
pub fn scale<T: Real>(a: &Vec3<T>, s: T) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Returns `None` for a zero vector.
pub fn normalize<T: Real>(a: &Vec3<T>) -> Option<Vec3<T>> {
    let n = norm(a);
    if n > T::zero() && n.is_finite() {
        Some(scale(a, T::one() / n))
    } else {
        None
    }
}

/// Flips the sign so the first component with magnitude above `tol` is positive.
pub fn canonical_sign<T: Real>(v: &Vec3<T>) -> Vec3<T> {
    let tol = T::lit(1e-12);
    for &c in v.iter() {
        if c.abs() > tol {
            return if c < T::zero() { scale(v, -T::one()) } else { *v };
        }
    }
    *v
}

/// Angle between two axes, ignoring sign, in degrees.
pub fn axis_angle_deg<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    let c = (dot(a, b).abs() / (norm(a) * norm(b))).min(T::one());
    c.acos().to_degrees()
}

/// Symmetric 3×3 matrix stored as (xx, xy, xz, yy, yz, zz).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymMat3<T> {
    pub entries: [T; 6],
}

impl<T: Real> SymMat3<T> {
    pub fn new(xx: T, xy: T, xz: T, yy: T, yz: T, zz: T) -> Self {
        Self { entries: [xx, xy, xz, yy, yz, zz] }
    }

    pub fn diagonal(a: T, b: T, c: T) -> Self {
        let z = T::zero();
        Self::new(a, z, z, b, z, c)
    }

    pub fn identity_scaled(s: T) -> Self {
        Self::diagonal(s, s, s)
    }

    /// Σ λᵢ vᵢ vᵢᵀ.
    pub fn from_eigen(values: &[T; 3], vectors: &[Vec3<T>; 3]) -> Self {
        let mut m = [T::zero(); 6];
        for (l, v) in values.iter().zip(vectors.iter()) {
            m[0] += *l * v[0] * v[0];
            m[1] += *l * v[0] * v[1];
            m[2] += *l * v[0] * v[2];
            m[3] += *l * v[1] * v[1];
            m[4] += *l * v[1] * v[2];
            m[5] += *l * v[2] * v[2];
        }
        Self { entries: m }
    }

    /// Scaled outer product s·v·vᵀ.
    pub fn outer(v: &Vec3<T>, s: T) -> Self {
        Self::from_eigen(&[s, T::zero(), T::zero()], &[*v, [T::zero(); 3], [T::zero(); 3]])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        const IDX: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
        self.entries[IDX[i][j]]
    }

    pub fn to_rows(&self) -> [[T; 3]; 3] {
        let mut r = [[T::zero(); 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.get(i, j);
            }
        }
        r
    }

    pub fn trace(&self) -> T {
        self.entries[0] + self.entries[3] + self.entries[5]
    }

    /// gᵀ M g.
    #[inline]
    pub fn quadratic_form(&self, g: &Vec3<T>) -> T {
        let e = &self.entries;
        e[0] * g[0] * g[0]
            + e[3] * g[1] * g[1]
            + e[5] * g[2] * g[2]
            + T::lit(2.0) * (e[1] * g[0] * g[1] + e[2] * g[0] * g[2] + e[4] * g[1] * g[2])
    }

    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        let mut out = [T::zero(); 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.get(i, 0) * v[0] + self.get(i, 1) * v[1] + self.get(i, 2) * v[2];
        }
        out
    }

    pub fn frobenius_norm(&self) -> T {
        let e = &self.entries;
        let two = T::lit(2.0);
        (e[0] * e[0] + e[3] * e[3] + e[5] * e[5] + two * (e[1] * e[1] + e[2] * e[2] + e[4] * e[4])).sqrt()
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut e = self.entries;
        for (a, b) in e.iter_mut().zip(other.entries.iter()) {
            *a -= *b;
        }
        Self { entries: e }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankDeficient;

/// Solves min ‖A x − b‖ for a row-major `rows × cols` matrix with `rows ≥ cols`
/// by Householder QR. Columns are equilibrated first so the rank test is
/// independent of column scaling.
pub fn least_squares<T: Real>(
    a: &[T],
    rows: usize,
    cols: usize,
    b: &[T],
) -> Result<Vec<T>, RankDeficient> {
    assert_eq!(a.len(), rows * cols);
    assert_eq!(b.len(), rows);
    if rows < cols {
        return Err(RankDeficient);
    }
    let mut r = a.to_vec();
    let mut rhs = b.to_vec();

    let mut col_scale = vec![T::one(); cols];
    for (j, s) in col_scale.iter_mut().enumerate() {
        let n = (0..rows).map(|i| r[i * cols + j].powi(2)).fold(T::zero(), |acc, v| acc + v).sqrt();
        if n == T::zero() {
            return Err(RankDeficient);
        }
        *s = n;
        for i in 0..rows {
            r[i * cols + j] /= n;
        }
    }

    for k in 0..cols {
        let alpha_sq = (k..rows).map(|i| r[i * cols + k].powi(2)).fold(T::zero(), |acc, v| acc + v);
        let alpha = alpha_sq.sqrt();
        if alpha == T::zero() {
            return Err(RankDeficient);
        }
        let x0 = r[k * cols + k];
        let alpha = if x0 > T::zero() { -alpha } else { alpha };
        // v = x - alpha e1, stored in place below the diagonal
        let mut v: Vec<T> = (k..rows).map(|i| r[i * cols + k]).collect();
        v[0] -= alpha;
        let vnorm_sq = v.iter().fold(T::zero(), |acc, x| acc + *x * *x);
        if vnorm_sq == T::zero() {
            continue;
        }
        let two = T::lit(2.0);
        for j in k..cols {
            let s = v
                .iter()
                .enumerate()
                .fold(T::zero(), |acc, (t, vi)| acc + *vi * r[(k + t) * cols + j]);
            let f = two * s / vnorm_sq;
            for (t, vi) in v.iter().enumerate() {
                r[(k + t) * cols + j] -= f * *vi;
            }
        }
        let s = v.iter().enumerate().fold(T::zero(), |acc, (t, vi)| acc + *vi * rhs[k + t]);
        let f = two * s / vnorm_sq;
        for (t, vi) in v.iter().enumerate() {
            rhs[k + t] -= f * *vi;
        }
    }

    let max_diag = (0..cols).map(|k| r[k * cols + k].abs()).fold(T::zero(), T::max);
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(1e3)) * max_diag;
    if (0..cols).any(|k| r[k * cols + k].abs() <= tol) {
        return Err(RankDeficient);
    }

    let mut x = vec![T::zero(); cols];
    for k in (0..cols).rev() {
        let mut s = rhs[k];
        for j in k + 1..cols {
            s -= r[k * cols + j] * x[j];
        }
        x[k] = s / r[k * cols + k];
    }
    for (xi, s) in x.iter_mut().zip(col_scale.iter()) {
        *xi /= *s;
    }
    Ok(x)
}

/// Solves A x = b for a symmetric positive definite row-major `n × n` matrix.
pub fn cholesky_solve<T: Real>(a: &[T], n: usize, b: &[T]) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= T::zero() || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}
