//! Forward diffusion signal models and magnitude (Rician) noise.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{dot, SymMat3, Vec3};
use crate::scalar::Real;

/// Diffusion tensor (mm²/s) with its non-diffusion-weighted amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor<T> {
    pub d: SymMat3<T>,
    pub s0: T,
}

impl<T: Real> Tensor<T> {
    pub fn new(d: SymMat3<T>, s0: T) -> Self {
        Self { d, s0 }
    }

    pub fn mean_diffusivity(&self) -> T {
        self.d.trace() / T::lit(3.0)
    }
}

/// Single-fibre ball-and-stick parameters. Ball and stick share the diffusivity `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallStick<T> {
    /// Stick volume fraction in [0, 1].
    pub f_stick: T,
    /// Shared diffusivity, mm²/s.
    pub d: T,
    /// Unit stick orientation; the model is invariant to its sign.
    pub mu: Vec3<T>,
    pub s0: T,
}

impl<T: Real> BallStick<T> {
    /// Ball (free water) weight, 1 − f_stick.
    pub fn fww(&self) -> T {
        T::one() - self.f_stick
    }

    pub fn is_valid(&self) -> bool {
        let mu_norm = dot(&self.mu, &self.mu).sqrt();
        self.f_stick >= T::zero()
            && self.f_stick <= T::one()
            && self.d >= T::zero()
            && (mu_norm - T::one()).abs() <= T::lit(1e-9).max(T::epsilon() * T::lit(16.0))
    }

    /// The tensor this model reduces to when `f_stick = 1`.
    pub fn stick_tensor(&self) -> Tensor<T> {
        Tensor::new(SymMat3::outer(&self.mu, self.d), self.s0)
    }
}

/// s0·exp(−b·gᵀDg).
#[inline]
pub fn dti_signal<T: Real>(t: &Tensor<T>, b: T, g: &Vec3<T>) -> T {
    if b == T::zero() {
        return t.s0;
    }
    t.s0 * (-b * t.d.quadratic_form(g)).exp()
}

/// s0·[(1 − f)·exp(−b·d) + f·exp(−b·d·(gᵀμ)²)].
#[inline]
pub fn ballstick_signal<T: Real>(m: &BallStick<T>, b: T, g: &Vec3<T>) -> T {
    if b == T::zero() {
        return m.s0;
    }
    let c = dot(g, &m.mu);
    let ball = (-b * m.d).exp();
    let stick = (-b * m.d * c * c).exp();
    m.s0 * ((T::one() - m.f_stick) * ball + m.f_stick * stick)
}

/// Magnitude of the clean signal corrupted by independent Gaussian noise of
/// standard deviation `sigma` on the real and imaginary channels.
pub fn add_rician_noise<T, R>(clean: T, sigma: T, rng: &mut R) -> T
where
    T: Real,
    R: Rng + ?Sized,
    StandardNormal: Distribution<T>,
{
    if sigma == T::zero() {
        return clean;
    }
    let n1: T = StandardNormal.sample(rng);
    let n2: T = StandardNormal.sample(rng);
    let re = clean + sigma * n1;
    let im = sigma * n2;
    re.hypot(im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(theta: f64, phi: f64) -> Vec3<f64> {
        [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
    }

    #[test]
    fn dti_b0_returns_s0() {
        let t = Tensor::new(SymMat3::new(1.7e-3, 1e-4, 0.0, 3e-4, 0.0, 3e-4), 812.5);
        assert_eq!(dti_signal(&t, 0.0, &[0.0, 0.0, 0.0]), 812.5);
    }

    #[test]
    fn isotropic_tensor_attenuation() {
        let t = Tensor::new(SymMat3::identity_scaled(1e-3), 1.0);
        let s = dti_signal(&t, 900.0, &unit(0.7, 2.1));
        assert!((s - 0.406_569_659_740_599_1).abs() < 1e-12, "{s}");
    }

    #[test]
    fn orthogonal_direction_not_attenuated() {
        let t = Tensor::new(SymMat3::diagonal(1e-3, 0.0, 0.0), 3.0);
        assert_eq!(dti_signal(&t, 900.0, &[0.0, 1.0, 0.0]), 3.0);
    }

    #[test]
    fn ballstick_limits() {
        let mut m = BallStick { f_stick: 0.0, d: 1.2e-3, mu: [0.0, 0.0, 1.0], s0: 2.0 };
        let g = unit(1.0, 0.3);
        assert!((ballstick_signal(&m, 900.0, &g) - 2.0 * (-1.08f64).exp()).abs() < 1e-15);
        m.f_stick = 1.0;
        assert_eq!(ballstick_signal(&m, 900.0, &[1.0, 0.0, 0.0]), 2.0);
    }

    #[test]
    fn parallel_gradient_attenuates_both_compartments_equally() {
        let m = BallStick::<f64> { f_stick: 0.7, d: 1.2e-3, mu: [0.0, 0.0, 1.0], s0: 1.0 };
        let s = ballstick_signal(&m, 900.0, &[0.0, 0.0, 1.0]);
        assert!((s - 0.339_595_525_644_939_2).abs() < 1e-12, "{s}");
    }

    #[test]
    fn rician_zero_sigma_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(add_rician_noise(123.456_f64, 0.0, &mut rng), 123.456);
    }

    #[test]
    fn rician_is_deterministic_per_seed() {
        let a = add_rician_noise(10.0_f64, 2.0, &mut ChaCha8Rng::seed_from_u64(99));
        let b = add_rician_noise(10.0_f64, 2.0, &mut ChaCha8Rng::seed_from_u64(99));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn rayleigh_mean_of_zero_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let mean = (0..n).map(|_| add_rician_noise(0.0_f64, 1.0, &mut rng)).sum::<f64>() / n as f64;
        let expected = (std::f64::consts::PI / 2.0).sqrt();
        assert!((mean - expected).abs() / expected < 0.01, "mean {mean}");
    }

    #[test]
    fn rician_small_sigma_approaches_clean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let s = add_rician_noise(50.0_f64, 1e-9, &mut rng);
            assert!((s - 50.0).abs() < 1e-7);
        }
    }

    proptest! {
        #[test]
        fn ballstick_sign_symmetric(f in 0.0..1.0f64, d in 0.0..3e-3f64, th in 0.0..std::f64::consts::PI, ph in 0.0..std::f64::consts::TAU,
                                    gth in 0.0..std::f64::consts::PI, gph in 0.0..std::f64::consts::TAU, b in 0.0..3000.0f64) {
            let mu = unit(th, ph);
            let g = unit(gth, gph);
            let m = BallStick { f_stick: f, d, mu, s0: 1.0 };
            let neg = BallStick { mu: [-mu[0], -mu[1], -mu[2]], ..m };
            prop_assert_eq!(ballstick_signal(&m, b, &g), ballstick_signal(&neg, b, &g));
        }

        #[test]
        fn pure_stick_equals_rank_one_tensor(d in 1e-5..3e-3f64, th in 0.0..std::f64::consts::PI, ph in 0.0..std::f64::consts::TAU,
                                             gth in 0.0..std::f64::consts::PI, gph in 0.0..std::f64::consts::TAU, b in 0.0..3000.0f64) {
            let m = BallStick { f_stick: 1.0, d, mu: unit(th, ph), s0: 7.0 };
            let g = unit(gth, gph);
            let bs = ballstick_signal(&m, b, &g);
            let dt = dti_signal(&m.stick_tensor(), b, &g);
            prop_assert!((bs - dt).abs() <= 1e-12 * bs.abs());
        }

        #[test]
        fn signals_non_increasing_in_b(f in 0.0..1.0f64, d in 0.0..3e-3f64, th in 0.0..std::f64::consts::PI,
                                       gth in 0.0..std::f64::consts::PI, b1 in 0.0..3000.0f64, db in 0.0..1000.0f64) {
            let m = BallStick { f_stick: f, d, mu: unit(th, 0.3), s0: 1.0 };
            let g = unit(gth, 1.1);
            prop_assert!(ballstick_signal(&m, b1 + db, &g) <= ballstick_signal(&m, b1, &g));
            let t = Tensor::new(SymMat3::new(1.5e-3, 1e-4, -2e-4, 4e-4, 5e-5, 3e-4), 1.0);
            prop_assert!(dti_signal(&t, b1 + db, &g) <= dti_signal(&t, b1, &g));
        }

        #[test]
        fn rician_output_non_negative(c in 0.0..100.0f64, sigma in 0.0..50.0f64, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            prop_assert!(add_rician_noise(c, sigma, &mut rng) >= 0.0);
        }
    }
}
