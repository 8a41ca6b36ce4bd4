//! The minimizing workload curve: the cheapest queue vector at each workload.
//!
//! For workload `w >= 0` the curve point `f(w)` minimizes the separable
//! holding cost `C(q)` over `{q >= 0 : theta . q = w}`. At the optimum all
//! marginal indices agree: `mu_1 C_1'(f_1) = ... = mu_I C_I'(f_I) = eta`,
//! and for power costs the index inverts in closed form, so solving reduces
//! to a one-dimensional monotone root-find in `eta`.

use crate::error::{Error, Result};
use crate::model::{CostModel, SystemConfig};
use crate::{scalar, Scalar};
use rand::Rng;

/// Relative tolerance for curve solves: `|theta . f - w| <= TOL * (1 + w)`.
pub const SOLVE_TOL: f64 = 1e-10;

/// Default lookup-table resolution.
pub const DEFAULT_TABLE_POINTS: usize = 4096;

/// One solved curve point.
#[derive(Clone, Debug)]
pub struct CurveSolution<T> {
    pub w: T,
    pub f: Vec<T>,
    /// Common index value `mu_i C_i'(f_i)`.
    pub eta: T,
}

/// Curve solver borrowing the system and cost parameters.
#[derive(Clone, Copy, Debug)]
pub struct Curve<'a, T> {
    system: &'a SystemConfig<T>,
    cost: &'a CostModel<T>,
}

impl<'a, T: Scalar> Curve<'a, T> {
    pub fn new(system: &'a SystemConfig<T>, cost: &'a CostModel<T>) -> Self {
        debug_assert_eq!(system.class_count(), cost.class_count());
        Self { system, cost }
    }

    /// Invert the marginal index of class `i`: the `x >= 0` with
    /// `mu_i C_i'(x) = eta`. For power costs,
    /// `x = (eta / (mu_i c_i p_i))^{1/(p_i - 1)}`.
    pub fn index_inverse(&self, class: usize, eta: T) -> T {
        debug_assert!(eta >= T::zero());
        if eta == T::zero() {
            return T::zero();
        }
        let c = self.cost.coefficients()[class];
        let p = self.cost.exponents()[class];
        let mu = self.system.mu()[class];
        (eta / (mu * c * p)).powf(T::one() / (p - T::one()))
    }

    /// Workload produced by a common index level: `theta . x(eta)`.
    /// Continuous, strictly increasing, zero at zero.
    fn workload_of_eta(&self, eta: T) -> T {
        (0..self.system.class_count())
            .map(|i| self.system.theta()[i] * self.index_inverse(i, eta))
            .sum()
    }

    fn solution_of_eta(&self, w: T, eta: T) -> CurveSolution<T> {
        let f = (0..self.system.class_count())
            .map(|i| self.index_inverse(i, eta))
            .collect();
        CurveSolution { w, f, eta }
    }

    /// Solve for `f(w)` by bisection on the index level.
    ///
    /// The bisection runs to bracket collapse, well past the guaranteed
    /// `SOLVE_TOL` feasibility bound: the cost excess of an approximate
    /// point is about `eta` times the workload residual, so steep cost
    /// families need the residual at machine level for the optimality
    /// oracle to stay within 1e-9.
    ///
    /// Panics on negative `w`; only nonnegative workloads are admitted.
    pub fn solve(&self, w: T) -> CurveSolution<T> {
        assert!(w >= T::zero(), "workload must be nonnegative");
        let class_count = self.system.class_count();
        if w == T::zero() {
            return CurveSolution {
                w,
                f: vec![T::zero(); class_count],
                eta: T::zero(),
            };
        }
        if class_count == 1 {
            // the constraint pins the single coordinate
            let f = w * self.system.mu()[0];
            let eta = self.system.mu()[0] * self.cost.marginal_i(0, f);
            return CurveSolution { w, f: vec![f], eta };
        }

        // Bracket: double until theta . x(eta_hi) >= w.
        let mut eta_hi = T::one();
        let mut grow = 0;
        while self.workload_of_eta(eta_hi) < w {
            eta_hi = eta_hi + eta_hi;
            grow += 1;
            assert!(grow < 2000, "curve bracket failed to expand");
        }
        let mut eta_lo = T::zero();
        let mut best_eta = eta_hi;
        let mut best_resid = (self.workload_of_eta(eta_hi) - w).abs();
        for _ in 0..200 {
            if eta_hi - eta_lo <= T::epsilon() * eta_hi {
                break;
            }
            let mid = (eta_lo + eta_hi) * scalar::<T>(0.5);
            let resid = self.workload_of_eta(mid) - w;
            if resid.abs() < best_resid {
                best_resid = resid.abs();
                best_eta = mid;
            }
            if resid == T::zero() {
                break;
            }
            if resid < T::zero() {
                eta_lo = mid;
            } else {
                eta_hi = mid;
            }
        }
        self.solution_of_eta(w, best_eta)
    }

    /// Residuals of a candidate solution: `(|theta.f - w|, max_i |index_i - eta|)`.
    pub fn residuals(&self, sol: &CurveSolution<T>) -> (T, T) {
        let feas = (self.system.workload(&sol.f) - sol.w).abs();
        let idx = (0..self.system.class_count())
            .map(|i| (self.system.mu()[i] * self.cost.marginal_i(i, sol.f[i]) - sol.eta).abs())
            .fold(T::zero(), T::max);
        (feas, idx)
    }
}

/// Monte Carlo optimality check: sample `sample_count` random feasible
/// points `q >= 0` with `theta . q = w` (uniform on the simplex section via
/// exponential spacings) and return the largest value of
/// `C(f(w)) - C(q)` seen. A correct minimizer stays below ~1e-9.
pub fn check_optimality_oracle<T: Scalar, R: Rng + ?Sized>(
    system: &SystemConfig<T>,
    cost: &CostModel<T>,
    solution: &CurveSolution<T>,
    sample_count: usize,
    rng: &mut R,
) -> T {
    let candidate_cost = cost.cost(&solution.f);
    if solution.w == T::zero() {
        // the only feasible point is the origin
        return candidate_cost - cost.cost(&vec![T::zero(); system.class_count()]);
    }
    let class_count = system.class_count();
    let mut q = vec![T::zero(); class_count];
    let mut spacings = vec![T::zero(); class_count];
    let mut worst = T::neg_infinity();
    for _ in 0..sample_count {
        let mut total = T::zero();
        for s in spacings.iter_mut() {
            *s = T::standard_exp(rng);
            total += *s;
        }
        for i in 0..class_count {
            // z_i = w * e_i / sum(e) splits the workload; q_i = z_i / theta_i
            q[i] = solution.w * spacings[i] / total / system.theta()[i];
        }
        let diff = candidate_cost - cost.cost(&q);
        worst = worst.max(diff);
    }
    worst
}

/// Memoized curve on a geometric workload grid with linear interpolation.
///
/// Interpolation preserves feasibility exactly (`theta . f` is linear in the
/// stored values) and each `f_i` stays monotone. Queries beyond the grid
/// fall back to an exact solve; queries at or below zero return the origin.
#[derive(Clone, Debug)]
pub struct CurveTable<T> {
    system: SystemConfig<T>,
    cost: CostModel<T>,
    grid_w: Vec<T>,
    grid_f: Vec<T>, // row-major, stride = class_count
}

impl<T: Scalar> CurveTable<T> {
    /// Tabulate `points` curve solves on `{0} U geometric(w_max * 1e-6, w_max)`.
    pub fn new(system: &SystemConfig<T>, cost: &CostModel<T>, points: usize, w_max: T) -> Self {
        let points = points.max(2);
        assert!(w_max > T::zero(), "table range must be positive");
        let solver = Curve::new(system, cost);
        let class_count = system.class_count();
        let mut grid_w = Vec::with_capacity(points);
        grid_w.push(T::zero());
        let w_min = w_max * scalar::<T>(1e-6);
        let steps = points - 2;
        for k in 0..=steps {
            let frac = if steps == 0 {
                T::one()
            } else {
                scalar::<T>(k as f64 / steps as f64)
            };
            // geometric: w_min * (w_max / w_min)^frac
            grid_w.push(w_min * (w_max / w_min).powf(frac));
        }
        let mut grid_f = Vec::with_capacity(grid_w.len() * class_count);
        for &w in &grid_w {
            grid_f.extend_from_slice(&solver.solve(w).f);
        }
        Self {
            system: system.clone(),
            cost: cost.clone(),
            grid_w,
            grid_f,
        }
    }

    /// Default table sized from a horizon estimate of the workload range.
    pub fn with_default_range(
        system: &SystemConfig<T>,
        cost: &CostModel<T>,
        points: usize,
        horizon: T,
    ) -> Self {
        // crude envelope: initial workload + drift sweep + 10 standard
        // deviations of the accumulated noise of theta . L
        let theta = system.theta();
        let w0 = system.workload(system.x0_hat());
        let drift: T = theta
            .iter()
            .zip(system.m_hat())
            .map(|(&th, &m)| th * m.abs())
            .sum();
        let var_rate: T = theta
            .iter()
            .zip(system.sigma())
            .map(|(&th, &s)| {
                let v = th * s;
                v * v + v * v
            })
            .sum();
        let w_max =
            w0 + drift * horizon + scalar::<T>(10.0) * (var_rate * horizon).sqrt() + T::one();
        Self::new(system, cost, points, w_max)
    }

    pub fn class_count(&self) -> usize {
        self.system.class_count()
    }

    pub fn w_max(&self) -> T {
        *self.grid_w.last().unwrap()
    }

    /// Evaluate `f(w)` into `out` (length `class_count`).
    pub fn eval_into(&self, w: T, out: &mut [T]) {
        debug_assert_eq!(out.len(), self.class_count());
        let class_count = self.class_count();
        if w <= T::zero() {
            out.fill(T::zero());
            return;
        }
        let last = self.grid_w.len() - 1;
        if w > self.grid_w[last] {
            let sol = Curve::new(&self.system, &self.cost).solve(w);
            out.copy_from_slice(&sol.f);
            return;
        }
        let hi = self.grid_w.partition_point(|&x| x < w);
        if self.grid_w[hi] == w {
            out.copy_from_slice(&self.grid_f[hi * class_count..(hi + 1) * class_count]);
            return;
        }
        let lo = hi - 1;
        let (w0, w1) = (self.grid_w[lo], self.grid_w[hi]);
        let alpha = (w - w0) / (w1 - w0);
        for i in 0..class_count {
            let f0 = self.grid_f[lo * class_count + i];
            let f1 = self.grid_f[hi * class_count + i];
            out[i] = f0 + alpha * (f1 - f0);
        }
    }

    pub fn eval(&self, w: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.class_count()];
        self.eval_into(w, &mut out);
        out
    }
}

/// Build a random critically loaded instance for testing: random service
/// rates and a random load split, power costs with exponents in
/// `[1.2, 4.0]`.
pub fn random_instance<T: Scalar, R: Rng + ?Sized>(
    class_count: usize,
    rng: &mut R,
) -> Result<(SystemConfig<T>, CostModel<T>)> {
    if class_count == 0 {
        return Err(Error::InvalidParameter {
            message: "class_count must be positive".into(),
        });
    }
    let mut load = vec![T::zero(); class_count];
    let mut total = T::zero();
    for l in load.iter_mut() {
        *l = T::standard_exp(rng) + scalar(0.05);
        total += *l;
    }
    let mut mu = Vec::with_capacity(class_count);
    let mut lambda = Vec::with_capacity(class_count);
    for l in &load {
        let m = scalar::<T>(0.2) + scalar::<T>(4.8) * T::unit_open(rng);
        let rho = *l / total;
        mu.push(m);
        lambda.push(rho * m);
    }
    let zeros = vec![T::zero(); class_count];
    let system = SystemConfig::new(lambda, mu, zeros.clone(), zeros.clone(), zeros)?;
    let mut c = Vec::with_capacity(class_count);
    let mut p = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        c.push(scalar::<T>(0.1) + scalar::<T>(4.9) * T::unit_open(rng));
        p.push(scalar::<T>(1.2) + scalar::<T>(2.8) * T::unit_open(rng));
    }
    let cost = CostModel::new(c, p)?;
    Ok((system, cost))
}
