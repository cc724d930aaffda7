//! Unconstrained parameterization of the ball-and-stick model and its Jacobian.
//!
//! Internal coordinates: x = [logit f, ln d, θ, φ, ln s0]. The orientation is
//! μ = sinθ cosφ·e₁ + sinθ sinφ·e₂ + cosθ·e₃ in a frame whose e₁ is the start
//! direction, so every start sits at (θ, φ) = (π/2, 0), away from the poles.

use crate::io::GradientScheme;
use crate::linalg::{canonical_sign, cross, dot, normalize, Vec3};
use crate::scalar::Real;
use crate::signal::BallStick;

pub const N_INTERNAL: usize = 5;

pub type Internal<T> = [T; N_INTERNAL];

#[derive(Debug, Clone)]
pub struct BallStickModel<'a, T> {
    scheme: &'a GradientScheme<T>,
    frame: [Vec3<T>; 3],
}

#[inline]
fn sigmoid<T: Real>(a: T) -> T {
    if a >= T::zero() {
        T::one() / (T::one() + (-a).exp())
    } else {
        let e = a.exp();
        e / (T::one() + e)
    }
}

impl<'a, T: Real> BallStickModel<'a, T> {
    /// Frame centred on `start.mu`, and the internal coordinates of `start`.
    /// `start.f_stick` must lie strictly inside (0, 1) and `start.d`, `start.s0` be positive.
    pub fn centred_on(scheme: &'a GradientScheme<T>, start: &BallStick<T>) -> (Self, Internal<T>) {
        let (o, z) = (T::one(), T::zero());
        let e1 = normalize(&start.mu).unwrap_or([o, z, z]);
        let helper = if e1[0].abs() < T::lit(0.9) { [o, z, z] } else { [z, o, z] };
        let e2 = normalize(&cross(&e1, &helper)).expect("helper axis not parallel");
        let e3 = cross(&e1, &e2);
        let f = start.f_stick;
        let x = [(f / (T::one() - f)).ln(), start.d.ln(), T::FRAC_PI_2(), T::zero(), start.s0.ln()];
        (Self { scheme, frame: [e1, e2, e3] }, x)
    }

    fn orientation(&self, theta: T, phi: T) -> (Vec3<T>, Vec3<T>, Vec3<T>) {
        let [e1, e2, e3] = &self.frame;
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let comb = |a: T, b: T, c: T| [a * e1[0] + b * e2[0] + c * e3[0], a * e1[1] + b * e2[1] + c * e3[1], a * e1[2] + b * e2[2] + c * e3[2]];
        let mu = comb(st * cp, st * sp, ct);
        let dmu_dtheta = comb(ct * cp, ct * sp, -st);
        let dmu_dphi = comb(-st * sp, st * cp, T::zero());
        (mu, dmu_dtheta, dmu_dphi)
    }

    pub fn to_params(&self, x: &Internal<T>) -> BallStick<T> {
        let (mu, _, _) = self.orientation(x[2], x[3]);
        let mu = normalize(&mu).unwrap_or(self.frame[0]);
        BallStick { f_stick: sigmoid(x[0]), d: x[1].exp(), mu: canonical_sign(&mu), s0: x[4].exp() }
    }

    pub fn predict(&self, x: &Internal<T>) -> Vec<T> {
        self.evaluate(x, false).0
    }

    /// Predicted signals and, when requested, the row-major n × 5 Jacobian.
    pub fn evaluate(&self, x: &Internal<T>, with_jacobian: bool) -> (Vec<T>, Vec<T>) {
        let f = sigmoid(x[0]);
        let d = x[1].exp();
        let s0 = x[4].exp();
        let (mu, dmu_t, dmu_p) = self.orientation(x[2], x[3]);
        let n = self.scheme.len();
        let mut pred = Vec::with_capacity(n);
        let mut jac = if with_jacobian { Vec::with_capacity(n * N_INTERNAL) } else { Vec::new() };
        let two = T::lit(2.0);
        for (b, g) in self.scheme.iter() {
            let c = dot(g, &mu);
            let eb = (-b * d).exp();
            let es = (-b * d * c * c).exp();
            let s = s0 * ((T::one() - f) * eb + f * es);
            pred.push(s);
            if with_jacobian {
                let ds_dc = s0 * f * es * (-b * d) * two * c;
                jac.extend_from_slice(&[
                    s0 * (es - eb) * f * (T::one() - f),
                    d * s0 * ((T::one() - f) * (-b) * eb + f * (-b * c * c) * es),
                    ds_dc * dot(g, &dmu_t),
                    ds_dc * dot(g, &dmu_p),
                    s,
                ]);
            }
        }
        (pred, jac)
    }
}
