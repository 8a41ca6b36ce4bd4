//! Problem parameters: rates, cost and divergence families, discounting.
//!
//! A system is described by first-order rates `lambda`, `mu` (critically
//! loaded: the traffic intensities `rho_i = lambda_i / mu_i` sum to one),
//! second-order perturbations `lambda_hat`, `mu_hat`, and the initial
//! diffusion-scaled queue `x0_hat`. The n-th system runs at
//! `lambda_i n + lambda_hat_i sqrt(n)` and `mu_i n + mu_hat_i sqrt(n)`.
//!
//! Holding costs are per-class powers `C_i(x) = c_i x^{p_i}` with `p_i > 1`;
//! divergence penalties are `g(x) = kappa (x^+)^{pbar}` with `pbar >= max p_i`,
//! one weight per arrival/service stream. The discount is either exponential
//! or a finite-horizon indicator.

use crate::error::{Error, Result};
use crate::{scalar, Scalar};

/// Tolerance on `|sum rho_i - 1|`; configurations outside it are rejected
/// rather than renormalized, so `lambda` stays authoritative.
pub const CRITICAL_LOAD_TOL: f64 = 1e-12;

/// Arrival or (potential) service stream of one class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamKind {
    Arrival,
    Service,
}

impl StreamKind {
    pub fn label(self) -> &'static str {
        match self {
            StreamKind::Arrival => "A",
            StreamKind::Service => "S",
        }
    }
}

/// Index of stream `(kind, class)` in a flat `2I` layout: arrivals first.
pub const fn stream_index(kind: StreamKind, class: usize, class_count: usize) -> usize {
    match kind {
        StreamKind::Arrival => class,
        StreamKind::Service => class_count + class,
    }
}

/// Inverse of [`stream_index`].
pub fn stream_of_index(index: usize, class_count: usize) -> (StreamKind, usize) {
    if index < class_count {
        (StreamKind::Arrival, index)
    } else {
        (StreamKind::Service, index - class_count)
    }
}

fn check_positive<T: Scalar>(name: &'static str, values: &[T]) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        if !(v > T::zero()) {
            return Err(Error::NonPositiveRate {
                name,
                index: i,
                value: v.to_f64_lossy(),
            });
        }
    }
    Ok(())
}

/// Validated system parameters with all derived heavy-traffic quantities.
#[derive(Clone, Debug)]
pub struct SystemConfig<T> {
    class_count: usize,
    lambda: Vec<T>,
    mu: Vec<T>,
    lambda_hat: Vec<T>,
    mu_hat: Vec<T>,
    x0_hat: Vec<T>,
    rho: Vec<T>,
    theta: Vec<T>,
    m_hat: Vec<T>,
    sigma: Vec<T>,
    sigma_s: Vec<T>,
}

impl<T: Scalar> SystemConfig<T> {
    /// Validate raw parameters and derive `rho`, `theta`, `m_hat`, `sigma`,
    /// `sigma_s`. Rejects non-positive rates, mismatched lengths, negative
    /// initial state, and any critical-load violation.
    pub fn new(
        lambda: Vec<T>,
        mu: Vec<T>,
        lambda_hat: Vec<T>,
        mu_hat: Vec<T>,
        x0_hat: Vec<T>,
    ) -> Result<Self> {
        let class_count = lambda.len();
        if class_count == 0 {
            return Err(Error::InvalidParameter {
                message: "at least one class is required".into(),
            });
        }
        for (name, v) in [
            ("mu", &mu),
            ("lambda_hat", &lambda_hat),
            ("mu_hat", &mu_hat),
            ("x0_hat", &x0_hat),
        ] {
            if v.len() != class_count {
                return Err(Error::InvalidParameter {
                    message: format!(
                        "{name} has {} entries but {class_count} classes are configured",
                        v.len()
                    ),
                });
            }
        }
        check_positive("lambda", &lambda)?;
        check_positive("mu", &mu)?;
        for (i, &v) in x0_hat.iter().enumerate() {
            if v < T::zero() {
                return Err(Error::ParameterOutOfRange {
                    name: "x0_hat",
                    index: i,
                    value: v.to_f64_lossy(),
                    bound: 0.0,
                });
            }
        }

        let rho: Vec<T> = lambda.iter().zip(&mu).map(|(&l, &m)| l / m).collect();
        let rho_sum: T = rho.iter().copied().sum();
        let tol: T = scalar(CRITICAL_LOAD_TOL);
        if (rho_sum - T::one()).abs() > tol {
            return Err(Error::CriticalLoadViolation {
                sum: rho_sum.to_f64_lossy(),
                tol: CRITICAL_LOAD_TOL,
            });
        }

        let theta: Vec<T> = mu.iter().map(|&m| T::one() / m).collect();
        let m_hat: Vec<T> = (0..class_count)
            .map(|i| lambda_hat[i] - rho[i] * mu_hat[i])
            .collect();
        let sigma: Vec<T> = lambda.iter().map(|&l| l.sqrt()).collect();
        let sigma_s: Vec<T> = mu.iter().map(|&m| m.sqrt()).collect();

        Ok(Self {
            class_count,
            lambda,
            mu,
            lambda_hat,
            mu_hat,
            x0_hat,
            rho,
            theta,
            m_hat,
            sigma,
            sigma_s,
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }
    pub fn stream_count(&self) -> usize {
        2 * self.class_count
    }
    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }
    pub fn mu(&self) -> &[T] {
        &self.mu
    }
    pub fn lambda_hat(&self) -> &[T] {
        &self.lambda_hat
    }
    pub fn mu_hat(&self) -> &[T] {
        &self.mu_hat
    }
    pub fn x0_hat(&self) -> &[T] {
        &self.x0_hat
    }
    pub fn rho(&self) -> &[T] {
        &self.rho
    }
    /// Mean service requirements `theta_i = 1 / mu_i`.
    pub fn theta(&self) -> &[T] {
        &self.theta
    }
    /// Second-order drift `m_hat_i = lambda_hat_i - rho_i mu_hat_i`.
    pub fn m_hat(&self) -> &[T] {
        &self.m_hat
    }
    /// Arrival noise scale `sigma_i = sqrt(lambda_i)`.
    pub fn sigma(&self) -> &[T] {
        &self.sigma
    }
    /// Service noise scale `sigma_{S,i} = sqrt(mu_i)`.
    pub fn sigma_s(&self) -> &[T] {
        &self.sigma_s
    }

    /// Workload of a queue vector: `theta . x`.
    pub fn workload(&self, x: &[T]) -> T {
        self.theta.iter().zip(x).map(|(&th, &xi)| th * xi).sum()
    }

    /// Rates of the n-th system. Rejects any `n` small enough that a
    /// negative second-order term drives a rate non-positive.
    pub fn scaled_rates(&self, n: u64) -> Result<ScaledRates<T>> {
        if n == 0 {
            return Err(Error::InvalidParameter {
                message: "scaling parameter n must be at least 1".into(),
            });
        }
        let nf: T = scalar(n as f64);
        let sqrt_n = nf.sqrt();
        let mut lambda_n = Vec::with_capacity(self.class_count);
        let mut mu_n = Vec::with_capacity(self.class_count);
        for i in 0..self.class_count {
            let ln = self.lambda[i] * nf + self.lambda_hat[i] * sqrt_n;
            if !(ln > T::zero()) {
                return Err(Error::RateUnderflow {
                    name: "lambda_n",
                    index: i,
                    n,
                    value: ln.to_f64_lossy(),
                });
            }
            let mn = self.mu[i] * nf + self.mu_hat[i] * sqrt_n;
            if !(mn > T::zero()) {
                return Err(Error::RateUnderflow {
                    name: "mu_n",
                    index: i,
                    n,
                    value: mn.to_f64_lossy(),
                });
            }
            lambda_n.push(ln);
            mu_n.push(mn);
        }
        Ok(ScaledRates { n, lambda_n, mu_n })
    }
}

/// Arrival and service rates of the n-th system.
#[derive(Clone, Debug)]
pub struct ScaledRates<T> {
    n: u64,
    lambda_n: Vec<T>,
    mu_n: Vec<T>,
}

impl<T: Scalar> ScaledRates<T> {
    pub fn n(&self) -> u64 {
        self.n
    }
    pub fn lambda_n(&self) -> &[T] {
        &self.lambda_n
    }
    pub fn mu_n(&self) -> &[T] {
        &self.mu_n
    }
    /// Reference rate of a flat-indexed stream.
    pub fn reference(&self, kind: StreamKind, class: usize) -> T {
        match kind {
            StreamKind::Arrival => self.lambda_n[class],
            StreamKind::Service => self.mu_n[class],
        }
    }
    /// The n-th system's mean service requirement `theta^n_i = n / mu^n_i`.
    pub fn theta_n(&self) -> Vec<T> {
        let nf: T = scalar(self.n as f64);
        self.mu_n.iter().map(|&m| nf / m).collect()
    }
}

/// Per-class power holding costs `C_i(x) = c_i x^{p_i}`, `p_i > 1`.
#[derive(Clone, Debug)]
pub struct CostModel<T> {
    c: Vec<T>,
    p: Vec<T>,
    p_max: T,
    c_max: T,
}

impl<T: Scalar> CostModel<T> {
    pub fn new(c: Vec<T>, p: Vec<T>) -> Result<Self> {
        if c.len() != p.len() || c.is_empty() {
            return Err(Error::InvalidParameter {
                message: "cost.c and cost.p must be non-empty and equally long".into(),
            });
        }
        check_positive("cost.c", &c)?;
        for (i, &pi) in p.iter().enumerate() {
            if !(pi > T::one()) {
                return Err(Error::ParameterOutOfRange {
                    name: "cost.p",
                    index: i,
                    value: pi.to_f64_lossy(),
                    bound: 1.0,
                });
            }
        }
        let p_max = p.iter().copied().fold(T::zero(), T::max);
        let c_max = c.iter().copied().fold(T::zero(), T::max);
        Ok(Self { c, p, p_max, c_max })
    }

    pub fn class_count(&self) -> usize {
        self.c.len()
    }
    pub fn coefficients(&self) -> &[T] {
        &self.c
    }
    pub fn exponents(&self) -> &[T] {
        &self.p
    }
    /// Global exponent `p = max_i p_i`.
    pub fn p_max(&self) -> T {
        self.p_max
    }
    /// Envelope constant: `C_i(x) <= c0 (1 + x^p)` with `c0 = max_i c_i`.
    pub fn envelope_c0(&self) -> T {
        self.c_max
    }

    /// `C_i(x)`.
    pub fn cost_i(&self, i: usize, x: T) -> T {
        debug_assert!(x >= T::zero());
        self.c[i] * x.powf(self.p[i])
    }

    /// `C_i'(x) = c_i p_i x^{p_i - 1}`.
    pub fn marginal_i(&self, i: usize, x: T) -> T {
        debug_assert!(x >= T::zero());
        if x == T::zero() {
            return T::zero();
        }
        self.c[i] * self.p[i] * x.powf(self.p[i] - T::one())
    }

    /// Separable total cost `C(x) = sum_i C_i(x_i)`.
    pub fn cost(&self, x: &[T]) -> T {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| self.cost_i(i, xi))
            .sum()
    }
}

/// Divergence penalty family `g_{j,i}(x) = kappa_{j,i} (x^+)^{pbar}`.
#[derive(Clone, Debug)]
pub struct DivergenceModel<T> {
    kappa_a: Vec<T>,
    kappa_s: Vec<T>,
    pbar: T,
}

impl<T: Scalar> DivergenceModel<T> {
    pub fn new(kappa_a: Vec<T>, kappa_s: Vec<T>, pbar: T) -> Result<Self> {
        if kappa_a.len() != kappa_s.len() || kappa_a.is_empty() {
            return Err(Error::InvalidParameter {
                message: "div.kappa_A and div.kappa_S must be non-empty and equally long".into(),
            });
        }
        check_positive("div.kappa_A", &kappa_a)?;
        check_positive("div.kappa_S", &kappa_s)?;
        if !(pbar >= T::one()) {
            return Err(Error::ParameterOutOfRange {
                name: "div.pbar",
                index: 0,
                value: pbar.to_f64_lossy(),
                bound: 1.0,
            });
        }
        Ok(Self {
            kappa_a,
            kappa_s,
            pbar,
        })
    }

    pub fn class_count(&self) -> usize {
        self.kappa_a.len()
    }
    pub fn pbar(&self) -> T {
        self.pbar
    }
    pub fn kappa(&self, kind: StreamKind, class: usize) -> T {
        match kind {
            StreamKind::Arrival => self.kappa_a[class],
            StreamKind::Service => self.kappa_s[class],
        }
    }

    /// `g_{j,i}(x)`; zero on the negative half-line.
    pub fn penalty(&self, kind: StreamKind, class: usize, x: T) -> T {
        if x <= T::zero() {
            T::zero()
        } else {
            self.kappa(kind, class) * x.powf(self.pbar)
        }
    }

    /// Cross-check `pbar >= max_i p_i` against the cost family.
    pub fn validate_against(&self, cost: &CostModel<T>) -> Result<()> {
        if self.pbar < cost.p_max() {
            return Err(Error::ExponentOrderViolation {
                pbar: self.pbar.to_f64_lossy(),
                p: cost.p_max().to_f64_lossy(),
            });
        }
        Ok(())
    }
}

/// Discount profile. Both variants integrate `t^{pbar}` finitely, so the
/// robust cost is well defined for every admissible divergence family.
#[derive(Clone, Copy, Debug)]
pub enum Discount<T> {
    /// `rho(t) = exp(-gamma t)`.
    Exponential { gamma: T },
    /// `rho(t) = 1{t <= horizon}`.
    FiniteHorizon { horizon: T },
}

impl<T: Scalar> Discount<T> {
    pub fn exponential(gamma: T) -> Result<Self> {
        if !(gamma > T::zero()) {
            return Err(Error::ParameterOutOfRange {
                name: "discount.gamma",
                index: 0,
                value: gamma.to_f64_lossy(),
                bound: 0.0,
            });
        }
        Ok(Discount::Exponential { gamma })
    }

    pub fn finite_horizon(horizon: T) -> Result<Self> {
        if !(horizon > T::zero()) {
            return Err(Error::ParameterOutOfRange {
                name: "discount.horizon",
                index: 0,
                value: horizon.to_f64_lossy(),
                bound: 0.0,
            });
        }
        Ok(Discount::FiniteHorizon { horizon })
    }

    /// `rho(t)`.
    pub fn weight(&self, t: T) -> T {
        match *self {
            Discount::Exponential { gamma } => (-gamma * t).exp(),
            Discount::FiniteHorizon { horizon } => {
                if t <= horizon {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Truncation horizon for the cost integrals. For the exponential
    /// discount, `max(20 / gamma, 20)` leaves a tail below 1e-4 of the
    /// running estimate under the polynomial cost envelope; a finite
    /// horizon is its own truncation point.
    pub fn effective_horizon(&self) -> T {
        match *self {
            Discount::Exponential { gamma } => {
                let twenty: T = scalar(20.0);
                (twenty / gamma).max(twenty)
            }
            Discount::FiniteHorizon { horizon } => horizon,
        }
    }
}

/// The validated parameter bundle every simulator consumes.
#[derive(Clone, Debug)]
pub struct ModelBundle<T> {
    pub system: SystemConfig<T>,
    pub cost: CostModel<T>,
    pub divergence: DivergenceModel<T>,
    pub discount: Discount<T>,
}

impl<T: Scalar> ModelBundle<T> {
    /// Assemble and cross-validate (dimensions agree, `pbar >= p`).
    pub fn new(
        system: SystemConfig<T>,
        cost: CostModel<T>,
        divergence: DivergenceModel<T>,
        discount: Discount<T>,
    ) -> Result<Self> {
        if cost.class_count() != system.class_count() {
            return Err(Error::InvalidParameter {
                message: format!(
                    "cost model has {} classes, system has {}",
                    cost.class_count(),
                    system.class_count()
                ),
            });
        }
        if divergence.class_count() != system.class_count() {
            return Err(Error::InvalidParameter {
                message: format!(
                    "divergence model has {} classes, system has {}",
                    divergence.class_count(),
                    system.class_count()
                ),
            });
        }
        divergence.validate_against(&cost)?;
        Ok(Self {
            system,
            cost,
            divergence,
            discount,
        })
    }
}
