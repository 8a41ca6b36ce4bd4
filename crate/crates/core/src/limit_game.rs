//! The heavy-traffic limit: a reflected controlled diffusion and its
//! robust-value estimator.
//!
//! Under the perturbed measure the `2I` driving Brownian motions gain drift
//! `psi_hat`. The free process is
//! `L(t) = x0_hat + m_hat t + sigma (B_A(t) - B_S(t))`; the minimizer plays
//! the curve-reflecting control: workload `W = Gamma[theta . L]` through
//! the one-dimensional Skorokhod map, state `X_f = f(W)` along the
//! minimizing curve, and control `Y_f = X_f - L`. Costs pair a discounted
//! holding integral with the per-stream divergence penalties; the robust
//! value is estimated by maximizing the Monte Carlo cost over a finite
//! strategy family under common random numbers.
//!
//! Modeling note: the diffusion applies `sigma_i = sqrt(lambda_i)` to both
//! the arrival and the service noise (and hence to both perturbation
//! drifts), whereas the n-th system scales service perturbations by
//! `sqrt(mu_i n)`. Under critical load `lambda_i = rho_i mu_i`, so the two
//! conventions agree on the service clock run at rate `rho_i`, which is
//! exactly the regime the limit describes.

use crate::adversary::{
    divergence_penalty, integrate_discounted, AdversaryStrategy, BrownianRnAccumulator, RnExponent,
    RnSample,
};
use crate::curve::CurveTable;
use crate::model::ModelBundle;
use crate::rng::{stream_rng, LIMIT_NOISE_STREAM};
use crate::{scalar, Scalar};
use rayon::prelude::*;

/// Monte Carlo estimate of a robust cost with its component breakdown.
///
/// `mean` is the average over replications of
/// `holding integral - sum of divergence penalties`; `components` are the
/// same averages term by term, so
/// `mean = holding - sum(divergence)` up to accumulation rounding.
#[derive(Clone, Debug)]
pub struct CostEstimate<T> {
    pub mean: T,
    pub std_error: T,
    pub replications: usize,
    pub holding: T,
    /// Per-stream divergence penalty means, arrivals first.
    pub divergence: Vec<T>,
}

impl<T: Scalar> CostEstimate<T> {
    /// Standard error of the difference of two independent estimates.
    pub fn joint_se(&self, other: &CostEstimate<T>) -> T {
        (self.std_error * self.std_error + other.std_error * other.std_error).sqrt()
    }
}

/// Aggregate per-replication `(value, holding, divergence)` triples.
pub(crate) fn aggregate_estimates<T: Scalar>(samples: &[(T, T, Vec<T>)]) -> CostEstimate<T> {
    let reps = samples.len();
    assert!(reps >= 2, "at least two replications are required");
    let rf: T = scalar(reps as f64);
    let mut mean = T::zero();
    let mut holding = T::zero();
    let streams = samples[0].2.len();
    let mut divergence = vec![T::zero(); streams];
    for (v, h, d) in samples {
        mean += *v;
        holding += *h;
        for (acc, &di) in divergence.iter_mut().zip(d) {
            *acc += di;
        }
    }
    mean /= rf;
    holding /= rf;
    for acc in divergence.iter_mut() {
        *acc /= rf;
    }
    let mut ss = T::zero();
    for (v, _, _) in samples {
        let d = *v - mean;
        ss += d * d;
    }
    let var = ss / scalar::<T>((reps - 1) as f64);
    CostEstimate {
        mean,
        std_error: (var / rf).sqrt(),
        replications: reps,
        holding,
        divergence,
    }
}

/// One replication of the limit game on a uniform Euler grid.
#[derive(Clone, Debug)]
pub struct LimitPaths<T> {
    /// Grid times `0, h, ..., horizon`.
    pub times: Vec<T>,
    /// Step width actually used (divides the horizon evenly).
    pub step: T,
    /// Driving Brownian paths under the perturbed measure, time-major with
    /// stride `2I` (arrival streams first).
    pub brownian: Vec<T>,
    /// Free process `L`, time-major with stride `I`.
    pub free: Vec<T>,
    /// Reflected workload `W = Gamma[theta . L]`.
    pub workload: Vec<T>,
    /// State `X_f = f(W)`, time-major with stride `I`.
    pub state: Vec<T>,
    /// Control `Y_f = X_f - L`, time-major with stride `I`.
    pub control: Vec<T>,
    /// Log likelihood-ratio paths, one per stream.
    pub rn: Vec<RnExponent<T>>,
}

impl<T: Scalar> LimitPaths<T> {
    pub fn grid_len(&self) -> usize {
        self.times.len()
    }
    pub fn state_at(&self, k: usize, class_count: usize) -> &[T] {
        &self.state[k * class_count..(k + 1) * class_count]
    }
    pub fn free_at(&self, k: usize, class_count: usize) -> &[T] {
        &self.free[k * class_count..(k + 1) * class_count]
    }
    pub fn control_at(&self, k: usize, class_count: usize) -> &[T] {
        &self.control[k * class_count..(k + 1) * class_count]
    }
}

fn grid_steps<T: Scalar>(horizon: T, step: T) -> (usize, T) {
    assert!(horizon > T::zero() && step > T::zero());
    let ratio = (horizon / step).to_f64_lossy();
    let steps = (ratio - 1e-9).ceil().max(1.0) as usize;
    (steps, horizon / scalar(steps as f64))
}

/// Simulate the curve-reflecting control with an explicit noise driver:
/// `noise(k, s)` must return the standard-normal draw of Euler step `k`,
/// stream `s` (arrivals `0..I`, services `I..2I`). Used directly by tests
/// that force degenerate noise and by coupled step-refinement checks.
pub fn simulate_f_reflected_driven<T: Scalar>(
    model: &ModelBundle<T>,
    curve: &CurveTable<T>,
    strategy: &AdversaryStrategy<T>,
    horizon: T,
    step: T,
    mut noise: impl FnMut(usize, usize) -> T,
) -> LimitPaths<T> {
    let system = &model.system;
    let class_count = system.class_count();
    let streams = 2 * class_count;
    let (steps, h) = grid_steps(horizon, step);
    let sqrt_h = h.sqrt();
    let delta = strategy.delta();

    let mut times = Vec::with_capacity(steps + 1);
    let mut brownian = vec![T::zero(); (steps + 1) * streams];
    let mut free = vec![T::zero(); (steps + 1) * class_count];
    let mut workload = Vec::with_capacity(steps + 1);
    let mut state = vec![T::zero(); (steps + 1) * class_count];
    let mut control = vec![T::zero(); (steps + 1) * class_count];
    let mut rn_acc = vec![BrownianRnAccumulator::<T>::new(); streams];
    let mut rn = (0..streams)
        .map(|_| RnExponent {
            times: Vec::with_capacity(steps + 1),
            log_ratio: Vec::with_capacity(steps + 1),
            martingale: Vec::with_capacity(steps + 1),
            compensator: Vec::with_capacity(steps + 1),
        })
        .collect::<Vec<_>>();

    let mut b = vec![T::zero(); streams];
    let mut psi = vec![T::zero(); streams];
    let mut reflection = crate::skorokhod::ReflectionState::new();
    let mut grid_index_current: Option<usize> = None;

    let record_rn = |rn: &mut Vec<RnExponent<T>>, rn_acc: &[BrownianRnAccumulator<T>], t: T| {
        for (path, acc) in rn.iter_mut().zip(rn_acc) {
            let RnSample {
                log_ratio,
                martingale,
                compensator,
            } = acc.sample();
            path.times.push(t);
            path.log_ratio.push(log_ratio);
            path.martingale.push(martingale);
            path.compensator.push(compensator);
        }
    };

    // initial point
    let t0 = T::zero();
    times.push(t0);
    free[..class_count].copy_from_slice(system.x0_hat());
    let w0 = reflection.push(system.workload(system.x0_hat()));
    workload.push(w0);
    {
        let (head, _) = state.split_at_mut(class_count);
        curve.eval_into(w0, head);
    }
    for i in 0..class_count {
        control[i] = state[i] - free[i];
    }
    record_rn(&mut rn, &rn_acc, t0);

    let eps_f: T = h * scalar(1e-9);
    for k in 0..steps {
        let t = scalar::<T>(k as f64) * h;
        let gi = ((t + eps_f) / delta).floor().to_f64_lossy() as usize;
        if grid_index_current != Some(gi) {
            grid_index_current = Some(gi);
            let x_now = &state[k * class_count..(k + 1) * class_count];
            strategy.eval_into(gi, x_now, &mut psi);
        }
        for s in 0..streams {
            let z = noise(k, s);
            let db_q = sqrt_h * z;
            b[s] += psi[s] * h + db_q;
            brownian[(k + 1) * streams + s] = b[s];
            rn_acc[s].step(psi[s], db_q, h);
        }
        let t_next = scalar::<T>((k + 1) as f64) * h;
        times.push(t_next);
        let mut theta_l = T::zero();
        for i in 0..class_count {
            let l = system.x0_hat()[i]
                + system.m_hat()[i] * t_next
                + system.sigma()[i] * (b[i] - b[class_count + i]);
            free[(k + 1) * class_count + i] = l;
            theta_l += system.theta()[i] * l;
        }
        let w = reflection.push(theta_l);
        workload.push(w);
        let row = &mut state[(k + 1) * class_count..(k + 2) * class_count];
        curve.eval_into(w, row);
        for i in 0..class_count {
            control[(k + 1) * class_count + i] =
                state[(k + 1) * class_count + i] - free[(k + 1) * class_count + i];
        }
        record_rn(&mut rn, &rn_acc, t_next);
    }

    LimitPaths {
        times,
        step: h,
        brownian,
        free,
        workload,
        state,
        control,
        rn,
    }
}

/// Simulate one replication from a seed; deterministic given the seed.
pub fn simulate_f_reflected<T: Scalar>(
    model: &ModelBundle<T>,
    curve: &CurveTable<T>,
    strategy: &AdversaryStrategy<T>,
    horizon: T,
    step: T,
    seed: u64,
) -> LimitPaths<T> {
    let mut rng = stream_rng(seed, 0, LIMIT_NOISE_STREAM);
    simulate_f_reflected_driven(model, curve, strategy, horizon, step, |_, _| {
        T::standard_normal(&mut rng)
    })
}

/// Per-replication cost components of one simulated path.
pub fn path_cost<T: Scalar>(
    model: &ModelBundle<T>,
    paths: &LimitPaths<T>,
    horizon: T,
) -> (T, T, Vec<T>) {
    let class_count = model.system.class_count();
    let holding_values: Vec<T> = (0..paths.grid_len())
        .map(|k| model.cost.cost(paths.state_at(k, class_count)))
        .collect();
    let holding = integrate_discounted(&paths.times, &holding_values, horizon, |t, c| {
        model.discount.weight(t) * c
    });
    let div = divergence_penalty(&paths.rn, &model.divergence, &model.discount, horizon);
    let total_div: T = div.iter().copied().sum();
    (holding - total_div, holding, div)
}

/// Monte Carlo estimate of the game cost of one strategy profile
/// (curve-reflecting control against the given perturbation strategy).
/// Replications use independent RNG streams derived from `seed` and run in
/// parallel; the reduction is sequential in replication order, so results
/// are bit-reproducible regardless of thread count.
pub fn estimate_game_cost<T: Scalar>(
    model: &ModelBundle<T>,
    curve: &CurveTable<T>,
    strategy: &AdversaryStrategy<T>,
    horizon: T,
    step: T,
    reps: usize,
    seed: u64,
) -> CostEstimate<T> {
    assert!(reps >= 2, "at least two replications are required");
    let samples: Vec<(T, T, Vec<T>)> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep, LIMIT_NOISE_STREAM);
            let paths =
                simulate_f_reflected_driven(model, curve, strategy, horizon, step, |_, _| {
                    T::standard_normal(&mut rng)
                });
            path_cost(model, &paths, horizon)
        })
        .collect();
    aggregate_estimates(&samples)
}

/// Result of a finite strategy-family search for the robust value.
#[derive(Clone, Debug)]
pub struct ValueSearch<T> {
    /// Every evaluated strategy with its estimate, in family order.
    pub evaluated: Vec<(AdversaryStrategy<T>, CostEstimate<T>)>,
    /// Index of the maximizing strategy in `evaluated`.
    pub best: usize,
}

impl<T: Scalar> ValueSearch<T> {
    pub fn best_strategy(&self) -> &AdversaryStrategy<T> {
        &self.evaluated[self.best].0
    }
    pub fn best_estimate(&self) -> &CostEstimate<T> {
        &self.evaluated[self.best].1
    }
}

/// Estimate the robust value by maximizing over a finite strategy family
/// with common random numbers (every strategy reuses the same replication
/// seeds). `search_budget` caps the number of cost evaluations; the family
/// is scanned in order. The achieved maximum is a lower bound on the
/// supremum over all admissible perturbations.
pub fn estimate_value<T: Scalar>(
    model: &ModelBundle<T>,
    curve: &CurveTable<T>,
    family: &[AdversaryStrategy<T>],
    search_budget: usize,
    horizon: T,
    step: T,
    reps: usize,
    seed: u64,
) -> ValueSearch<T> {
    assert!(!family.is_empty(), "strategy family must be non-empty");
    let mut evaluated = Vec::new();
    let mut best = 0usize;
    for (idx, strategy) in family.iter().take(search_budget.max(1)).enumerate() {
        let est = estimate_game_cost(model, curve, strategy, horizon, step, reps, seed);
        if est.mean
            > evaluated
                .get(best)
                .map_or(T::neg_infinity(), |e: &(_, CostEstimate<T>)| e.1.mean)
        {
            best = idx;
        }
        evaluated.push((strategy.clone(), est));
    }
    ValueSearch { evaluated, best }
}
