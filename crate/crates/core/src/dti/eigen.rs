//! Symmetric 3×3 eigen-decomposition.
//!
//! Eigenvalues come from the trigonometric closed form. The eigenvector of the
//! best-separated eigenvalue is taken from cross products of the rows of
//! A − λI, and the remaining pair from an exact 2×2 rotation in its orthogonal
//! complement, so near-degenerate pairs stay orthonormal. A spectrum that is
//! degenerate to working precision falls back to cyclic Jacobi.

use crate::linalg::{canonical_sign, cross, dot, normalize, SymMat3, Vec3};
use crate::scalar::Real;

/// Eigenvalues sorted λ1 ≥ λ2 ≥ λ3 with matching orthonormal vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSystem<T> {
    pub values: [T; 3],
    pub vectors: [Vec3<T>; 3],
}

impl<T: Real> EigenSystem<T> {
    pub fn from_values(values: [T; 3]) -> Self {
        let (o, z) = (T::one(), T::zero());
        Self { values, vectors: [[o, z, z], [z, o, z], [z, z, o]] }
    }

    pub fn reconstruct(&self) -> SymMat3<T> {
        SymMat3::from_eigen(&self.values, &self.vectors)
    }

    pub fn principal(&self) -> Vec3<T> {
        self.vectors[0]
    }
}

pub fn eig3_sym<T: Real>(m: &SymMat3<T>) -> EigenSystem<T> {
    let scale = m.entries.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    if scale == T::zero() || !scale.is_finite() {
        return EigenSystem::from_values([T::zero(); 3]);
    }
    let mut a = *m;
    for e in a.entries.iter_mut() {
        *e /= scale;
    }

    let (values, vectors) = match closed_form(&a) {
        Some(res) => res,
        None => jacobi(&a),
    };
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap_or(std::cmp::Ordering::Equal));
    EigenSystem {
        values: order.map(|i| values[i] * scale),
        vectors: order.map(|i| canonical_sign(&vectors[i])),
    }
}

fn closed_form<T: Real>(a: &SymMat3<T>) -> Option<([T; 3], [Vec3<T>; 3])> {
    let three = T::lit(3.0);
    let two = T::lit(2.0);
    let e = &a.entries;
    let q = a.trace() / three;
    let off = e[1] * e[1] + e[2] * e[2] + e[4] * e[4];
    let p2 = (e[0] - q).powi(2) + (e[3] - q).powi(2) + (e[5] - q).powi(2) + two * off;
    let p = (p2 / T::lit(6.0)).sqrt();
    if p <= T::lit(1e-12).max(T::epsilon() * T::lit(16.0)) {
        return None;
    }
    let b = SymMat3::new((e[0] - q) / p, e[1] / p, e[2] / p, (e[3] - q) / p, e[4] / p, (e[5] - q) / p);
    let be = &b.entries;
    let det = be[0] * (be[3] * be[5] - be[4] * be[4]) - be[1] * (be[1] * be[5] - be[4] * be[2])
        + be[2] * (be[1] * be[4] - be[3] * be[2]);
    let r = (det / two).max(-T::one()).min(T::one());
    let phi = r.acos() / three;
    let l1 = q + two * p * phi.cos();
    let l3 = q + two * p * (phi + two * T::PI() / three).cos();
    let l2 = three * q - l1 - l3;

    let isolated = if l1 - l2 >= l2 - l3 { l1 } else { l3 };
    let v = null_vector(a, isolated)?;
    let (u, w) = complement_basis(&v);
    let au = a.mul_vec(&u);
    let aw = a.mul_vec(&w);
    let (m00, m01, m11) = (dot(&u, &au), dot(&u, &aw), dot(&w, &aw));
    let (c, s) = rotation_2x2(m00, m01, m11);
    let x = [c * u[0] + s * w[0], c * u[1] + s * w[1], c * u[2] + s * w[2]];
    let y = [c * w[0] - s * u[0], c * w[1] - s * u[1], c * w[2] - s * u[2]];
    let rayleigh = |vec: &Vec3<T>| dot(vec, &a.mul_vec(vec));
    Some(([rayleigh(&v), rayleigh(&x), rayleigh(&y)], [v, x, y]))
}

/// Unit vector spanning the null space of A − λI, from the largest row cross product.
fn null_vector<T: Real>(a: &SymMat3<T>, lambda: T) -> Option<Vec3<T>> {
    let rows = a.to_rows();
    let r0 = [rows[0][0] - lambda, rows[0][1], rows[0][2]];
    let r1 = [rows[1][0], rows[1][1] - lambda, rows[1][2]];
    let r2 = [rows[2][0], rows[2][1], rows[2][2] - lambda];
    let candidates = [cross(&r0, &r1), cross(&r0, &r2), cross(&r1, &r2)];
    let best = candidates
        .iter()
        .max_by(|x, y| dot(x, x).partial_cmp(&dot(y, y)).unwrap_or(std::cmp::Ordering::Equal))?;
    normalize(best)
}

fn complement_basis<T: Real>(v: &Vec3<T>) -> (Vec3<T>, Vec3<T>) {
    let (o, z) = (T::one(), T::zero());
    let axis = if v[0].abs() <= v[1].abs() && v[0].abs() <= v[2].abs() {
        [o, z, z]
    } else if v[1].abs() <= v[2].abs() {
        [z, o, z]
    } else {
        [z, z, o]
    };
    let u = normalize(&cross(v, &axis)).expect("axis chosen non-parallel");
    let w = cross(v, &u);
    (u, w)
}

/// (cos, sin) of the rotation diagonalizing [[a, b], [b, c]].
fn rotation_2x2<T: Real>(a: T, b: T, c: T) -> (T, T) {
    if b == T::zero() {
        return (T::one(), T::zero());
    }
    let theta = (c - a) / (T::lit(2.0) * b);
    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
    let cs = T::one() / (t * t + T::one()).sqrt();
    // rotation that zeroes the off-diagonal of Rᵀ M R with R = [[c, -s], [s, c]]
    (cs, -t * cs)
}

fn jacobi<T: Real>(m: &SymMat3<T>) -> ([T; 3], [Vec3<T>; 3]) {
    let mut a = m.to_rows();
    let mut v = [[T::zero(); 3]; 3];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = T::one();
    }
    for _sweep in 0..64 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        let diag = a[0][0].powi(2) + a[1][1].powi(2) + a[2][2].powi(2);
        if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q] == T::zero() {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (T::lit(2.0) * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
            let c = T::one() / (t * t + T::one()).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let col = |j: usize| [v[0][j], v[1][j], v[2][j]];
    ([a[0][0], a[1][1], a[2][2]], [col(0), col(1), col(2)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(m: &SymMat3<f64>) {
        let es = eig3_sym(m);
        assert!(es.values[0] >= es.values[1] && es.values[1] >= es.values[2], "{:?}", es.values);
        for i in 0..3 {
            for j in 0..3 {
                let d = dot(&es.vectors[i], &es.vectors[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((d - target).abs() < 1e-9, "orthonormality {i},{j}: {d}");
            }
        }
        let err = es.reconstruct().sub(m).frobenius_norm();
        assert!(err <= 1e-9 * m.frobenius_norm().max(f64::MIN_POSITIVE), "reconstruction error {err}");
    }

    #[test]
    fn isotropic() {
        let es = eig3_sym(&SymMat3::identity_scaled(1e-3));
        assert_eq!(es.values, [1e-3; 3]);
        assert_eq!(es.vectors[0], [1.0, 0.0, 0.0]);
    }

    #[test]
    fn diagonal_recovers_axes() {
        let es = eig3_sym(&SymMat3::<f64>::diagonal(2e-3, 3e-3, 1e-3));
        for (got, want) in es.values.iter().zip([3e-3, 2e-3, 1e-3]) {
            assert!((got - want).abs() < 1e-18);
        }
        let axes = [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        for (v, a) in es.vectors.iter().zip(axes.iter()) {
            assert!((dot(v, a).abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_matrix() {
        let es = eig3_sym(&SymMat3::<f64>::default());
        assert_eq!(es.values, [0.0; 3]);
    }

    #[test]
    fn degenerate_pairs_and_rank_one() {
        check(&SymMat3::diagonal(1.7e-3, 3e-4, 3e-4));
        check(&SymMat3::diagonal(1.0, 1.0, -2.0));
        check(&SymMat3::outer(&[0.6, 0.0, 0.8], 2e-3));
        check(&SymMat3::new(1.0, 1e-11, 0.0, 1.0, 0.0, 0.5));
        check(&SymMat3::new(2.0, 1.0, 1.0, 2.0, 1.0, 2.0));
    }

    #[test]
    fn jacobi_agrees_with_closed_form() {
        let m = SymMat3::<f64>::new(0.9, 0.2, -0.1, 0.5, 0.3, 0.2);
        let cf = eig3_sym(&m);
        let (vals, _) = jacobi(&m);
        let mut vals = vals.to_vec();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (a, b) in cf.values.iter().zip(vals.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn single_precision() {
        let m = SymMat3::<f32>::new(1.5e-3, 1e-4, 0.0, 4e-4, 0.0, 3e-4);
        let es = eig3_sym(&m);
        let err = es.reconstruct().sub(&m).frobenius_norm();
        assert!(err <= 1e-5 * m.frobenius_norm());
    }
}
