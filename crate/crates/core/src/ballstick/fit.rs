use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ballstick::model::{BallStickModel, Internal, N_INTERNAL};
use crate::derive_seed;
use crate::dti::{check_dti_design, dti_metrics, eig3_sym};
use crate::io::GradientScheme;
use crate::linalg::{cholesky_solve, Vec3};
use crate::scalar::Real;
use crate::signal::{BallStick, Tensor};
use crate::FitError;

/// Damped Gauss-Newton settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallStickFitOptions {
    /// Cap on trial steps per start.
    pub max_iterations: usize,
    /// Relative cost decrease below which a start is converged.
    pub tolerance: f64,
    pub initial_damping: f64,
    pub damping_decrease: f64,
    pub damping_increase: f64,
    /// Perturbed starts tried after the unperturbed one.
    pub restarts: usize,
}

impl Default for BallStickFitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-10,
            initial_damping: 1e-3,
            damping_decrease: 0.3,
            damping_increase: 3.0,
            restarts: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallStickFitResult<T> {
    pub params: BallStick<T>,
    pub residual_rms: T,
    /// Trial steps taken by the winning start.
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
}

/// Starting point from a tensor: principal direction, MD and FA, clamped into
/// the model's interior.
pub fn init_from_dti<T: Real>(t: &Tensor<T>) -> BallStick<T> {
    let es = eig3_sym(&t.d);
    let m = dti_metrics(&es);
    let clamp = |v: T, lo: f64, hi: f64| {
        if v.is_nan() {
            T::lit(lo)
        } else {
            v.max(T::lit(lo)).min(T::lit(hi))
        }
    };
    BallStick { f_stick: clamp(m.fa, 0.05, 0.95), d: clamp(m.md, 1e-5, 5e-3), mu: es.principal(), s0: t.s0 }
}

/// (ID, FWW): the shared diffusivity and the ball weight.
pub fn ballstick_metrics<T: Real>(m: &BallStick<T>) -> (T, T) {
    (m.d, m.fww())
}

#[cfg_attr(not(test), allow(dead_code))]
struct Run<T> {
    x: Internal<T>,
    cost: T,
    iterations: usize,
    converged: bool,
    /// Cost after each accepted step, starting with the initial cost.
    history: Vec<T>,
}

fn cost_of<T: Real>(pred: &[T], obs: &[T]) -> T {
    pred.iter().zip(obs).fold(T::zero(), |acc, (p, o)| acc + (*p - *o) * (*p - *o))
}

fn minimize<T: Real>(model: &BallStickModel<T>, start: Internal<T>, obs: &[T], opts: &BallStickFitOptions, cost_floor: T) -> Run<T> {
    let n = N_INTERNAL;
    let tol = T::lit(opts.tolerance);
    let mut x = start;
    let mut cost = cost_of(&model.predict(&x), obs);
    let mut damping = T::lit(opts.initial_damping);
    let mut iterations = 0;
    let mut history = vec![cost];
    if !cost.is_finite() {
        return Run { x, cost, iterations, converged: false, history };
    }
    if cost <= cost_floor {
        return Run { x, cost, iterations, converged: true, history };
    }

    while iterations < opts.max_iterations {
        let (pred, jac) = model.evaluate(&x, true);
        let mut jtj = [T::zero(); N_INTERNAL * N_INTERNAL];
        let mut grad = [T::zero(); N_INTERNAL];
        for (i, row) in jac.chunks_exact(n).enumerate() {
            let r = pred[i] - obs[i];
            for a in 0..n {
                grad[a] += row[a] * r;
                for b in 0..=a {
                    jtj[a * n + b] += row[a] * row[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                jtj[b * n + a] = jtj[a * n + b];
            }
        }
        let max_diag = (0..n).map(|k| jtj[k * n + k]).fold(T::zero(), T::max);
        if max_diag == T::zero() || grad.iter().all(|g| *g == T::zero()) {
            return Run { x, cost, iterations, converged: true, history };
        }
        let diag_floor = max_diag * T::lit(1e-12);

        loop {
            if iterations >= opts.max_iterations {
                return Run { x, cost, iterations, converged: false, history };
            }
            iterations += 1;
            let mut a = jtj;
            for k in 0..n {
                a[k * n + k] += damping * jtj[k * n + k].max(diag_floor);
            }
            let neg_grad: Vec<T> = grad.iter().map(|g| -*g).collect();
            let accepted = cholesky_solve(&a, n, &neg_grad).and_then(|step| {
                let mut trial = x;
                for (t, s) in trial.iter_mut().zip(step.iter()) {
                    *t += *s;
                }
                let c = cost_of(&model.predict(&trial), obs);
                (c.is_finite() && c < cost).then_some((trial, c))
            });
            match accepted {
                Some((trial, new_cost)) => {
                    let rel = (cost - new_cost) / cost;
                    x = trial;
                    cost = new_cost;
                    history.push(cost);
                    damping *= T::lit(opts.damping_decrease);
                    if rel < tol || cost <= cost_floor {
                        return Run { x, cost, iterations, converged: true, history };
                    }
                    break;
                }
                None => {
                    damping *= T::lit(opts.damping_increase);
                    if damping > T::lit(1e16) {
                        // no representable step lowers the cost
                        return Run { x, cost, iterations, converged: true, history };
                    }
                }
            }
        }
    }
    Run { x, cost, iterations, converged: false, history }
}

fn perturb<T: Real>(base: &BallStick<T>, rng: &mut ChaCha8Rng) -> BallStick<T> {
    let mut normal = || -> f64 { StandardNormal.sample(rng) };
    let f = base.f_stick.as_f64();
    let logit = (f / (1.0 - f)).ln() + normal();
    let d = base.d.as_f64() * (0.3 * normal()).exp();
    let mu: Vec3<f64> = [
        base.mu[0].as_f64() + 0.3 * normal(),
        base.mu[1].as_f64() + 0.3 * normal(),
        base.mu[2].as_f64() + 0.3 * normal(),
    ];
    let f_new = (1.0 / (1.0 + (-logit).exp())).clamp(1e-3, 1.0 - 1e-3);
    BallStick {
        f_stick: T::lit(f_new),
        d: T::lit(d.clamp(1e-6, 1e-2)),
        mu: crate::linalg::normalize(&mu.map(T::lit)).unwrap_or(base.mu),
        s0: base.s0,
    }
}

fn sanitize<T: Real>(init: &BallStick<T>, signals: &[T]) -> BallStick<T> {
    let lo = T::lit(1e-3);
    let f = if init.f_stick.is_finite() { init.f_stick.max(lo).min(T::one() - lo) } else { T::lit(0.5) };
    let d = if init.d.is_finite() && init.d > T::zero() { init.d } else { T::lit(1e-3) };
    let s0 = if init.s0.is_finite() && init.s0 > T::zero() {
        init.s0
    } else {
        signals.iter().fold(T::zero(), |a, s| a.max(*s)).max(T::lit(1e-6))
    };
    BallStick { f_stick: f, d, mu: init.mu, s0 }
}

/// Least-squares ball-and-stick fit from `init` plus `options.restarts`
/// perturbed starts drawn from `seed`; the lowest final cost wins.
/// Non-convergence is reported through `converged`, not as an error.
pub fn fit_ballstick_voxel<T: Real>(
    signals: &[T],
    scheme: &GradientScheme<T>,
    init: &BallStick<T>,
    options: &BallStickFitOptions,
    seed: u64,
) -> Result<BallStickFitResult<T>, FitError> {
    if signals.len() != scheme.len() {
        return Err(FitError::LengthMismatch { expected: scheme.len(), actual: signals.len() });
    }
    check_dti_design(scheme)?;
    if signals.iter().all(|s| !(*s > T::zero())) {
        return Err(FitError::AllNonPositive);
    }
    let signal_energy = signals.iter().fold(T::zero(), |a, s| a + *s * *s);
    let cost_floor = signal_energy * T::lit(1e-26);

    let base = sanitize(init, signals);
    let mut best: Option<(BallStickFitResult<T>, T)> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xba11]));
    let mut restarts_used = 0;
    for attempt in 0..=options.restarts {
        if attempt > 0 {
            if best.as_ref().is_some_and(|(_, c)| *c <= cost_floor) {
                break;
            }
            restarts_used += 1;
        }
        let start = if attempt == 0 { base } else { perturb(&base, &mut rng) };
        let (model, x0) = BallStickModel::centred_on(scheme, &start);
        let run = minimize(&model, x0, signals, options, cost_floor);
        if !run.cost.is_finite() {
            continue;
        }
        let better = best.as_ref().is_none_or(|(_, c)| run.cost < *c);
        if better {
            let result = BallStickFitResult {
                params: model.to_params(&run.x),
                residual_rms: (run.cost / T::from_usize_lossy(signals.len())).sqrt(),
                iterations: run.iterations,
                converged: run.converged,
                restarts_used: 0,
            };
            best = Some((result, run.cost));
        }
    }
    let (mut result, _) = best.ok_or(FitError::AllNonPositive)?;
    result.restarts_used = restarts_used;
    Ok(result)
}
