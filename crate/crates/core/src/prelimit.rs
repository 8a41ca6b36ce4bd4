//! Exact discrete-event simulation of the n-th queueing system.
//!
//! Between events and control-grid ticks every stream has a constant
//! intensity (arrivals at the perturbed rate, the served classes' potential
//! service streams at the perturbed rate times the allocated effort), so
//! the next event is drawn from competing exponential clocks that are
//! regenerated after every event and tick; memorylessness makes this exact.
//!
//! Policies:
//! - `cmu_preemptive`: after every event the server works on the smallest
//!   class index maximizing `mu_i C_i'(x_hat_i)`;
//! - `cmu_nonpreemptive`: the class is re-selected only at departures and
//!   at arrivals into an empty system;
//! - `static_priority(order)`: highest-priority nonempty class;
//! - `fixed_fraction`: effort split proportionally to `rho` over nonempty
//!   classes.
//!
//! Each run extracts the diffusion-scaled trajectory on a uniform output
//! grid together with the per-stream log likelihood-ratio paths, and the
//! scaled queue identity
//! `X_hat_i(t) = X_hat_i(0) + m_hat^n_i t + A_hat_i(t) - S_hat_i(T_i(t)) + Y_hat_i(t)`
//! can be re-verified from the recorded counts via [`audit_identity`].

use crate::adversary::{
    divergence_penalty, integrate_discounted, AdversaryStrategy, PoissonRnAccumulator, RnExponent,
};
use crate::curve::CurveTable;
use crate::error::{Error, Result};
use crate::limit_game::{aggregate_estimates, CostEstimate};
use crate::model::{CostModel, ModelBundle, ScaledRates, StreamKind, SystemConfig};
use crate::rng::{event_stream_id, stream_rng};
use crate::{scalar, Scalar};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

/// Default number of output-grid points for cost quadrature.
pub const DEFAULT_OUTPUT_POINTS: usize = 2000;
/// Default event cap per replication.
pub const DEFAULT_EVENT_CAP: u64 = 10_000_000;

/// Server policy.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Policy {
    CmuPreemptive,
    CmuNonpreemptive,
    /// Preemptive fixed priority; classes listed highest first (0-based).
    StaticPriority(Vec<usize>),
    /// Effort `rho_i` over nonempty classes, renormalized.
    FixedFraction,
}

impl Policy {
    pub fn name(&self) -> String {
        match self {
            Policy::CmuPreemptive => "cmu_preemptive".into(),
            Policy::CmuNonpreemptive => "cmu_nonpreemptive".into(),
            Policy::StaticPriority(order) => format!(
                "static_priority:{}",
                order
                    .iter()
                    .map(|i| (i + 1).to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            Policy::FixedFraction => "fixed_fraction".into(),
        }
    }

    /// Parse a policy name; static priority orders are 1-based, e.g.
    /// `static_priority:2,1`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cmu_preemptive" => Ok(Policy::CmuPreemptive),
            "cmu_nonpreemptive" => Ok(Policy::CmuNonpreemptive),
            "fixed_fraction" => Ok(Policy::FixedFraction),
            other => {
                if let Some(rest) = other.strip_prefix("static_priority:") {
                    let mut order = Vec::new();
                    for part in rest.split(',') {
                        let idx: usize =
                            part.trim().parse().map_err(|_| Error::InvalidParameter {
                                message: format!("bad class index '{part}' in policy '{other}'"),
                            })?;
                        if idx == 0 {
                            return Err(Error::InvalidParameter {
                                message: "static priority classes are 1-based".into(),
                            });
                        }
                        order.push(idx - 1);
                    }
                    Ok(Policy::StaticPriority(order))
                } else {
                    Err(Error::InvalidParameter {
                        message: format!("unknown policy '{other}'"),
                    })
                }
            }
        }
    }

    fn validate(&self, class_count: usize) -> Result<()> {
        if let Policy::StaticPriority(order) = self {
            let mut seen = vec![false; class_count];
            if order.len() != class_count {
                return Err(Error::InvalidParameter {
                    message: "static priority order must list every class once".into(),
                });
            }
            for &i in order {
                if i >= class_count || seen[i] {
                    return Err(Error::InvalidParameter {
                        message: "static priority order must be a permutation".into(),
                    });
                }
                seen[i] = true;
            }
        }
        Ok(())
    }
}

/// Event kinds of the log.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Arrival(usize),
    Departure(usize),
    GridTick,
}

/// One logged event: state after the event.
#[derive(Clone, Debug)]
pub struct EventRecord<T> {
    pub time: T,
    pub kind: EventKind,
    pub queue: Vec<u64>,
    pub service_time: Vec<T>,
}

/// Full event log of one replication.
#[derive(Clone, Debug)]
pub struct EventLog<T> {
    pub initial_queue: Vec<u64>,
    pub initial_allocation: Vec<T>,
    pub events: Vec<EventRecord<T>>,
    /// Allocation in force after the corresponding event.
    pub allocation: Vec<Vec<T>>,
}

/// Diffusion-scaled sample paths of one replication on a uniform grid.
#[derive(Clone, Debug)]
pub struct ScaledTrajectory<T> {
    pub n: u64,
    pub times: Vec<T>,
    /// `X_hat`, time-major with stride `I`.
    pub x_hat: Vec<T>,
    /// `Y_hat_i(t) = mu^n_i (rho_i t - T_i(t)) / sqrt(n)`, stride `I`.
    pub y_hat: Vec<T>,
    /// Cumulative arrival counts, stride `I`.
    pub arrivals: Vec<u64>,
    /// Cumulative departure counts, stride `I`.
    pub departures: Vec<u64>,
    /// Cumulative service time `T_i(t)`, stride `I`.
    pub service_time: Vec<T>,
    /// Log likelihood-ratio paths per stream, arrivals first.
    pub rn: Vec<RnExponent<T>>,
}

impl<T: Scalar> ScaledTrajectory<T> {
    pub fn grid_len(&self) -> usize {
        self.times.len()
    }
    pub fn x_hat_at(&self, k: usize, class_count: usize) -> &[T] {
        &self.x_hat[k * class_count..(k + 1) * class_count]
    }
    pub fn y_hat_at(&self, k: usize, class_count: usize) -> &[T] {
        &self.y_hat[k * class_count..(k + 1) * class_count]
    }
}

/// Simulation parameters of one prelimit run.
#[derive(Clone, Debug)]
pub struct PrelimitParams<T> {
    pub n: u64,
    pub policy: Policy,
    pub horizon: T,
    pub output_points: usize,
    pub event_cap: u64,
}

impl<T: Scalar> PrelimitParams<T> {
    pub fn new(n: u64, policy: Policy, horizon: T) -> Self {
        Self {
            n,
            policy,
            horizon,
            output_points: DEFAULT_OUTPUT_POINTS,
            event_cap: DEFAULT_EVENT_CAP,
        }
    }
}

/// The dynamic-priority index rule: the smallest class index maximizing
/// `mu_i C_i'(x_hat_i)`, or `None` when the system is empty. The selected
/// class is always nonempty because the marginal cost vanishes only at 0.
pub fn select_class_cmu<T: Scalar>(
    x_hat: &[T],
    system: &SystemConfig<T>,
    cost: &CostModel<T>,
) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    let mut any_nonzero = false;
    for i in 0..x_hat.len() {
        if x_hat[i] > T::zero() {
            any_nonzero = true;
        }
        let index = system.mu()[i] * cost.marginal_i(i, x_hat[i]);
        match best {
            Some((_, b)) if index <= b => {}
            _ => best = Some((i, index)),
        }
    }
    if !any_nonzero {
        return None;
    }
    best.map(|(i, _)| i)
}

struct Engine<'a, T> {
    model: &'a ModelBundle<T>,
    strategy: &'a AdversaryStrategy<T>,
    params: &'a PrelimitParams<T>,
    rates: ScaledRates<T>,
    sqrt_n: T,
    class_count: usize,

    t: T,
    queue: Vec<u64>,
    service_time: Vec<T>,
    alloc: Vec<T>,
    in_service: Option<usize>,
    arrivals: Vec<u64>,
    departures: Vec<u64>,
    event_count: u64,

    psi_hat: Vec<T>,
    intensity: Vec<T>, // perturbed rates per stream, arrivals first
    grid_index: usize,
    clamp_warned: bool,

    rn: Vec<PoissonRnAccumulator<T>>,
    rngs: Vec<ChaCha12Rng>,

    // output grid
    grid_times: Vec<T>,
    next_out: usize,
    out_x_hat: Vec<T>,
    out_y_hat: Vec<T>,
    out_arrivals: Vec<u64>,
    out_departures: Vec<u64>,
    out_service: Vec<T>,
    out_rn: Vec<RnExponent<T>>,

    x_hat_buf: Vec<T>,
    log: Option<EventLog<T>>,
}

impl<'a, T: Scalar> Engine<'a, T> {
    fn new(
        model: &'a ModelBundle<T>,
        strategy: &'a AdversaryStrategy<T>,
        params: &'a PrelimitParams<T>,
        seed: u64,
        replication: u64,
        record_log: bool,
    ) -> Result<Self> {
        params.policy.validate(model.system.class_count())?;
        if !(params.horizon > T::zero()) {
            return Err(Error::InvalidParameter {
                message: "horizon must be positive".into(),
            });
        }
        if params.output_points < 2 {
            return Err(Error::InvalidParameter {
                message: "output grid needs at least two points".into(),
            });
        }
        let rates = model.system.scaled_rates(params.n)?;
        let class_count = model.system.class_count();
        let streams = 2 * class_count;
        let sqrt_n = scalar::<T>(params.n as f64).sqrt();

        let queue: Vec<u64> = model
            .system
            .x0_hat()
            .iter()
            .map(|&x| (x * sqrt_n).round().to_f64_lossy() as u64)
            .collect();

        let mut rn = Vec::with_capacity(streams);
        for i in 0..class_count {
            rn.push(PoissonRnAccumulator::new(rates.lambda_n()[i])?);
        }
        for i in 0..class_count {
            rn.push(PoissonRnAccumulator::new(rates.mu_n()[i])?);
        }
        let rngs = (0..streams)
            .map(|s| stream_rng(seed, replication, event_stream_id(s)))
            .collect();

        let points = params.output_points;
        let grid_times = (0..points)
            .map(|m| params.horizon * scalar::<T>(m as f64) / scalar::<T>((points - 1) as f64))
            .collect();

        let out_rn = (0..streams)
            .map(|_| RnExponent {
                times: Vec::with_capacity(points),
                log_ratio: Vec::with_capacity(points),
                martingale: Vec::with_capacity(points),
                compensator: Vec::with_capacity(points),
            })
            .collect();

        let log = record_log.then(|| EventLog {
            initial_queue: queue.clone(),
            initial_allocation: vec![T::zero(); class_count],
            events: Vec::new(),
            allocation: Vec::new(),
        });

        let mut engine = Self {
            model,
            strategy,
            params,
            rates,
            sqrt_n,
            class_count,
            t: T::zero(),
            queue,
            service_time: vec![T::zero(); class_count],
            alloc: vec![T::zero(); class_count],
            in_service: None,
            arrivals: vec![0; class_count],
            departures: vec![0; class_count],
            event_count: 0,
            psi_hat: vec![T::zero(); streams],
            intensity: vec![T::zero(); streams],
            grid_index: 0,
            clamp_warned: false,
            rn,
            rngs,
            grid_times,
            next_out: 0,
            out_x_hat: Vec::with_capacity(points * class_count),
            out_y_hat: Vec::with_capacity(points * class_count),
            out_arrivals: Vec::with_capacity(points * class_count),
            out_departures: Vec::with_capacity(points * class_count),
            out_service: Vec::with_capacity(points * class_count),
            out_rn,
            x_hat_buf: vec![T::zero(); class_count],
            log,
        };

        engine.refresh_x_hat();
        engine.in_service =
            select_class_cmu(&engine.x_hat_buf, &engine.model.system, &engine.model.cost);
        engine.recompute_allocation();
        engine.apply_strategy()?;
        if let Some(log) = engine.log.as_mut() {
            log.initial_allocation = engine.alloc.clone();
        }
        Ok(engine)
    }

    fn refresh_x_hat(&mut self) {
        for i in 0..self.class_count {
            self.x_hat_buf[i] = scalar::<T>(self.queue[i] as f64) / self.sqrt_n;
        }
    }

    /// Evaluate the strategy for the current grid interval and refresh the
    /// perturbed intensities. Intensities are clamped away from zero with a
    /// one-shot warning.
    fn apply_strategy(&mut self) -> Result<()> {
        self.refresh_x_hat();
        self.strategy
            .eval_into(self.grid_index, &self.x_hat_buf, &mut self.psi_hat);
        let n: T = scalar(self.params.n as f64);
        for s in 0..2 * self.class_count {
            let (kind, class) = crate::model::stream_of_index(s, self.class_count);
            let reference = self.rates.reference(kind, class);
            let first_order = match kind {
                StreamKind::Arrival => self.model.system.lambda()[class],
                StreamKind::Service => self.model.system.mu()[class],
            };
            let mut psi = reference + self.psi_hat[s] * (first_order * n).sqrt();
            let floor = reference * scalar::<T>(1e-9);
            if psi < floor {
                if !self.clamp_warned {
                    log::warn!(
                        "perturbed intensity for stream {}{} clamped to stay positive (n = {})",
                        kind.label(),
                        class + 1,
                        self.params.n
                    );
                    self.clamp_warned = true;
                }
                psi = floor;
            }
            self.intensity[s] = psi;
            self.rn[s].set_intensity(psi)?;
        }
        Ok(())
    }

    fn recompute_allocation(&mut self) {
        let class_count = self.class_count;
        self.alloc.fill(T::zero());
        match &self.params.policy {
            Policy::CmuPreemptive => {
                self.refresh_x_hat();
                if let Some(i) =
                    select_class_cmu(&self.x_hat_buf, &self.model.system, &self.model.cost)
                {
                    self.alloc[i] = T::one();
                }
            }
            Policy::CmuNonpreemptive => {
                if let Some(i) = self.in_service {
                    debug_assert!(self.queue[i] > 0);
                    self.alloc[i] = T::one();
                }
            }
            Policy::StaticPriority(order) => {
                for &i in order {
                    if self.queue[i] > 0 {
                        self.alloc[i] = T::one();
                        break;
                    }
                }
            }
            Policy::FixedFraction => {
                let mut total = T::zero();
                for i in 0..class_count {
                    if self.queue[i] > 0 {
                        total += self.model.system.rho()[i];
                    }
                }
                if total > T::zero() {
                    for i in 0..class_count {
                        if self.queue[i] > 0 {
                            self.alloc[i] = self.model.system.rho()[i] / total;
                        }
                    }
                }
            }
        }
    }

    /// Move time forward to `target`, filling output-grid points passed on
    /// the way. State is right-continuous: a grid point exactly at an event
    /// time is written after the event has been applied.
    fn advance_to(&mut self, target: T) {
        let t_old = self.t;
        let dt = target - t_old;
        debug_assert!(dt >= T::zero());

        // clocks first so grid sampling stays within the current segment
        for i in 0..self.class_count {
            if self.alloc[i] > T::zero() {
                self.service_time[i] = self.service_time[i] + self.alloc[i] * dt;
            }
            self.rn[self.class_count + i].advance_clock(self.service_time[i]);
            self.rn[i].advance_clock(target);
        }

        while self.next_out < self.grid_times.len() && self.grid_times[self.next_out] < target {
            let tau = self.grid_times[self.next_out];
            debug_assert!(tau >= t_old);
            self.record_grid_point(tau, target);
            self.next_out += 1;
        }
        self.t = target;
    }

    /// Record the state at grid time `tau <= clock_now`, where `clock_now`
    /// is the time `service_time` currently refers to.
    fn record_grid_point(&mut self, tau: T, clock_now: T) {
        for i in 0..self.class_count {
            let t_i = if self.alloc[i] > T::zero() {
                // service_time was already advanced to clock_now; rewind
                self.service_time[i] - self.alloc[i] * (clock_now - tau)
            } else {
                self.service_time[i]
            };
            let x_hat = scalar::<T>(self.queue[i] as f64) / self.sqrt_n;
            let y_hat =
                self.rates.mu_n()[i] * (self.model.system.rho()[i] * tau - t_i) / self.sqrt_n;
            self.out_x_hat.push(x_hat);
            self.out_y_hat.push(y_hat);
            self.out_arrivals.push(self.arrivals[i]);
            self.out_departures.push(self.departures[i]);
            self.out_service.push(t_i);

            let sa = self.rn[i].sample_at(tau);
            let path = &mut self.out_rn[i];
            path.times.push(tau);
            path.log_ratio.push(sa.log_ratio);
            path.martingale.push(sa.martingale);
            path.compensator.push(sa.compensator);

            let ss = self.rn[self.class_count + i].sample_at(t_i);
            let path = &mut self.out_rn[self.class_count + i];
            path.times.push(tau);
            path.log_ratio.push(ss.log_ratio);
            path.martingale.push(ss.martingale);
            path.compensator.push(ss.compensator);
        }
    }

    fn push_log(&mut self, kind: EventKind) {
        if let Some(log) = self.log.as_mut() {
            log.events.push(EventRecord {
                time: self.t,
                kind,
                queue: self.queue.clone(),
                service_time: self.service_time.clone(),
            });
            log.allocation.push(self.alloc.clone());
        }
    }

    fn run(mut self) -> Result<(Option<EventLog<T>>, ScaledTrajectory<T>)> {
        let horizon = self.params.horizon;
        let delta = self.strategy.delta();
        loop {
            let next_tick = delta * scalar::<T>((self.grid_index + 1) as f64);
            let barrier = next_tick.min(horizon);

            // competing exponential clocks, regenerated every iteration
            let mut winner: Option<(T, usize)> = None;
            for s in 0..2 * self.class_count {
                let rate = match crate::model::stream_of_index(s, self.class_count) {
                    (StreamKind::Arrival, _) => self.intensity[s],
                    (StreamKind::Service, i) => {
                        if self.alloc[i] > T::zero() {
                            self.intensity[s] * self.alloc[i]
                        } else {
                            continue;
                        }
                    }
                };
                let dt = T::standard_exp(&mut self.rngs[s]) / rate;
                if winner.is_none_or(|(best, _)| dt < best) {
                    winner = Some((dt, s));
                }
            }

            let event_time = winner.map(|(dt, _)| self.t + dt);
            match event_time {
                Some(te) if te < barrier => {
                    let (_, s) = winner.unwrap();
                    self.advance_to(te);
                    self.apply_event(s)?;
                }
                _ => {
                    self.advance_to(barrier);
                    if barrier >= horizon {
                        break;
                    }
                    self.grid_index += 1;
                    self.apply_strategy()?;
                    self.push_log(EventKind::GridTick);
                }
            }
        }

        // grid points at or past the final time take the final state
        while self.next_out < self.grid_times.len() {
            let tau = self.grid_times[self.next_out].min(self.t);
            self.record_grid_point(tau, self.t);
            self.next_out += 1;
        }

        let trajectory = ScaledTrajectory {
            n: self.params.n,
            times: self.grid_times,
            x_hat: self.out_x_hat,
            y_hat: self.out_y_hat,
            arrivals: self.out_arrivals,
            departures: self.out_departures,
            service_time: self.out_service,
            rn: self.out_rn,
        };
        Ok((self.log, trajectory))
    }

    fn apply_event(&mut self, stream: usize) -> Result<()> {
        self.event_count += 1;
        if self.event_count > self.params.event_cap {
            return Err(Error::HorizonOverflow {
                cap: self.params.event_cap,
            });
        }
        let (kind, class) = crate::model::stream_of_index(stream, self.class_count);
        match kind {
            StreamKind::Arrival => {
                self.queue[class] += 1;
                self.arrivals[class] += 1;
                self.rn[stream].record_event();
                if self.params.policy == Policy::CmuNonpreemptive && self.in_service.is_none() {
                    // a customer admitted into an empty system is served
                    // immediately
                    self.refresh_x_hat();
                    self.in_service =
                        select_class_cmu(&self.x_hat_buf, &self.model.system, &self.model.cost);
                }
                self.recompute_allocation();
                self.push_log(EventKind::Arrival(class));
            }
            StreamKind::Service => {
                assert!(
                    self.queue[class] > 0 && self.alloc[class] > T::zero(),
                    "departure from an empty or unserved class"
                );
                self.queue[class] -= 1;
                self.departures[class] += 1;
                self.rn[stream].record_event();
                if self.params.policy == Policy::CmuNonpreemptive {
                    self.refresh_x_hat();
                    self.in_service =
                        select_class_cmu(&self.x_hat_buf, &self.model.system, &self.model.cost);
                }
                self.recompute_allocation();
                self.push_log(EventKind::Departure(class));
            }
        }
        Ok(())
    }
}

/// Run one replication and keep the full event log.
pub fn simulate_system<T: Scalar>(
    model: &ModelBundle<T>,
    strategy: &AdversaryStrategy<T>,
    params: &PrelimitParams<T>,
    seed: u64,
) -> Result<(EventLog<T>, ScaledTrajectory<T>)> {
    let engine = Engine::new(model, strategy, params, seed, 0, true)?;
    let (log, traj) = engine.run()?;
    Ok((log.expect("log was requested"), traj))
}

/// Run one replication without the event log (cheap path for estimators).
pub fn simulate_trajectory<T: Scalar>(
    model: &ModelBundle<T>,
    strategy: &AdversaryStrategy<T>,
    params: &PrelimitParams<T>,
    seed: u64,
    replication: u64,
) -> Result<ScaledTrajectory<T>> {
    let engine = Engine::new(model, strategy, params, seed, replication, false)?;
    Ok(engine.run()?.1)
}

/// Cost components of one trajectory.
pub fn trajectory_cost<T: Scalar>(
    model: &ModelBundle<T>,
    traj: &ScaledTrajectory<T>,
    horizon: T,
) -> (T, T, Vec<T>) {
    let class_count = model.system.class_count();
    let holding_values: Vec<T> = (0..traj.grid_len())
        .map(|k| model.cost.cost(traj.x_hat_at(k, class_count)))
        .collect();
    let holding = integrate_discounted(&traj.times, &holding_values, horizon, |t, c| {
        model.discount.weight(t) * c
    });
    let div = divergence_penalty(&traj.rn, &model.divergence, &model.discount, horizon);
    let total: T = div.iter().copied().sum();
    (holding - total, holding, div)
}

/// Monte Carlo estimate of the robust cost of one policy/strategy pair in
/// the n-th system. Replications run in parallel on independent streams;
/// the reduction is sequential, so output is reproducible bit for bit.
pub fn estimate_qcp_cost<T: Scalar>(
    model: &ModelBundle<T>,
    strategy: &AdversaryStrategy<T>,
    params: &PrelimitParams<T>,
    reps: usize,
    seed: u64,
) -> Result<CostEstimate<T>> {
    assert!(reps >= 2, "at least two replications are required");
    let samples: Vec<Result<(T, T, Vec<T>)>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let traj = simulate_trajectory(model, strategy, params, seed, rep)?;
            Ok(trajectory_cost(model, &traj, params.horizon))
        })
        .collect();
    let mut values = Vec::with_capacity(reps);
    for s in samples {
        values.push(s?);
    }
    Ok(aggregate_estimates(&values))
}

/// State-space collapse metric: the largest distance between the scaled
/// queue vector and the curve point of its own workload,
/// `sup_t || X_hat(t) - f(theta^n . X_hat(t)) ||`, with
/// `theta^n_i = n / mu^n_i`.
pub fn collapse_metric<T: Scalar>(
    traj: &ScaledTrajectory<T>,
    curve: &CurveTable<T>,
    system: &SystemConfig<T>,
) -> T {
    let class_count = system.class_count();
    let rates = system
        .scaled_rates(traj.n)
        .expect("trajectory came from a valid scale");
    let theta_n = rates.theta_n();
    let mut f_buf = vec![T::zero(); class_count];
    let mut worst = T::zero();
    for k in 0..traj.grid_len() {
        let x = traj.x_hat_at(k, class_count);
        let w: T = theta_n.iter().zip(x).map(|(&th, &xi)| th * xi).sum();
        curve.eval_into(w, &mut f_buf);
        let dist: T = x
            .iter()
            .zip(&f_buf)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt();
        worst = worst.max(dist);
    }
    worst
}

/// Largest residual of the scaled queue identity over the output grid:
/// every term is reconstructed from the recorded counters.
pub fn audit_identity<T: Scalar>(traj: &ScaledTrajectory<T>, system: &SystemConfig<T>) -> T {
    let class_count = system.class_count();
    let rates = system
        .scaled_rates(traj.n)
        .expect("trajectory came from a valid scale");
    let sqrt_n = scalar::<T>(traj.n as f64).sqrt();
    let mut worst = T::zero();
    let x0: Vec<T> = (0..class_count).map(|i| traj.x_hat[i]).collect();
    for k in 0..traj.grid_len() {
        let tau = traj.times[k];
        for i in 0..class_count {
            let lambda_n = rates.lambda_n()[i];
            let mu_n = rates.mu_n()[i];
            let m_hat_n = (lambda_n - system.rho()[i] * mu_n) / sqrt_n;
            let a = traj.arrivals[k * class_count + i];
            let d = traj.departures[k * class_count + i];
            let t_i = traj.service_time[k * class_count + i];
            let a_hat = (scalar::<T>(a as f64) - lambda_n * tau) / sqrt_n;
            let s_hat = (scalar::<T>(d as f64) - mu_n * t_i) / sqrt_n;
            let y_hat = traj.y_hat[k * class_count + i];
            let rhs = x0[i] + m_hat_n * tau + a_hat - s_hat + y_hat;
            let resid = (traj.x_hat[k * class_count + i] - rhs).abs();
            worst = worst.max(resid);
        }
    }
    worst
}

/// Event-log audit counters.
#[derive(Clone, Copy, Debug, Default)]
pub struct AuditReport {
    /// Intervals with a nonempty system where the total effort was not one.
    /// For work-conserving policies this doubles as the complementarity
    /// audit: the workload regulator grows exactly on idle stretches.
    pub work_conservation_violations: usize,
    /// Intervals where an empty class received effort.
    pub empty_service_violations: usize,
    pub intervals: usize,
}

impl AuditReport {
    pub fn clean(&self) -> bool {
        self.work_conservation_violations == 0 && self.empty_service_violations == 0
    }
}

/// Audit the allocation process of a logged run.
pub fn audit_event_log<T: Scalar>(log: &EventLog<T>) -> AuditReport {
    let tol: T = scalar(1e-12);
    let mut report = AuditReport::default();
    let check = |queue: &[u64], alloc: &[T], report: &mut AuditReport| {
        report.intervals += 1;
        let total: T = alloc.iter().copied().sum();
        let busy = queue.iter().any(|&q| q > 0);
        if busy && (total - T::one()).abs() > tol {
            report.work_conservation_violations += 1;
        }
        for (q, &u) in queue.iter().zip(alloc) {
            if *q == 0 && u > T::zero() {
                report.empty_service_violations += 1;
            }
        }
    };
    check(&log.initial_queue, &log.initial_allocation, &mut report);
    for (rec, alloc) in log.events.iter().zip(&log.allocation) {
        check(&rec.queue, alloc, &mut report);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::AdversaryStrategy;
    use crate::curve::CurveTable;
    use crate::model::{CostModel, Discount, DivergenceModel, SystemConfig};

    fn reference_bundle() -> ModelBundle<f64> {
        let system = SystemConfig::new(
            vec![0.5, 0.5],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let cost = CostModel::new(vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
        let divergence = DivergenceModel::new(vec![1.0; 2], vec![1.0; 2], 2.0).unwrap();
        let discount = Discount::exponential(1.0).unwrap();
        ModelBundle::new(system, cost, divergence, discount).unwrap()
    }

    fn zero_strategy() -> AdversaryStrategy<f64> {
        AdversaryStrategy::zero(0.1, 2.0).unwrap()
    }

    #[test]
    fn cmu_selection_examples() {
        let system = SystemConfig::new(
            vec![0.5, 1.5],
            vec![1.0, 3.0],
            vec![0.0; 2],
            vec![0.0; 2],
            vec![0.0; 2],
        )
        .unwrap();
        let cost = CostModel::new(vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
        // indices mu_i * 2 x_i = (4, 6) -> class 2 (0-based 1)
        assert_eq!(select_class_cmu(&[2.0, 1.0], &system, &cost), Some(1));

        let tie_system = SystemConfig::new(
            vec![0.5, 0.5],
            vec![1.0, 1.0],
            vec![0.0; 2],
            vec![0.0; 2],
            vec![0.0; 2],
        )
        .unwrap();
        // tie -> lowest index
        assert_eq!(select_class_cmu(&[1.0, 1.0], &tie_system, &cost), Some(0));
        assert_eq!(select_class_cmu(&[0.0, 0.0], &tie_system, &cost), None);
        // empty classes are never selected
        assert_eq!(select_class_cmu(&[0.0, 3.0], &tie_system, &cost), Some(1));
    }

    #[test]
    fn first_event_from_empty_system_is_an_arrival() {
        let model = reference_bundle();
        let params = PrelimitParams::new(1, Policy::CmuPreemptive, 50.0);
        let strategy = zero_strategy();
        let (log, _) = simulate_system(&model, &strategy, &params, 1).unwrap();
        let first = log
            .events
            .iter()
            .find(|e| e.kind != EventKind::GridTick)
            .expect("some event");
        assert!(matches!(first.kind, EventKind::Arrival(_)));
    }

    #[test]
    fn zero_adversary_means_zero_exponents() {
        let model = reference_bundle();
        let params = PrelimitParams::new(16, Policy::CmuPreemptive, 10.0);
        let (_, traj) = simulate_system(&model, &zero_strategy(), &params, 3).unwrap();
        for path in &traj.rn {
            assert!(path.log_ratio.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn identity_reconstruction_holds() {
        let model = reference_bundle();
        for seed in 0..5 {
            for &n in &[1u64, 4, 16, 64] {
                let params = PrelimitParams::new(n, Policy::CmuPreemptive, 8.0);
                let strategy =
                    AdversaryStrategy::constant(0.1, 2.0, vec![0.5, -0.5, 0.5, -0.5]).unwrap();
                let (_, traj) = simulate_system(&model, &strategy, &params, seed).unwrap();
                let resid = audit_identity(&traj, &model.system);
                assert!(resid <= 1e-9, "identity residual {resid} at n={n}");
            }
        }
    }

    #[test]
    fn allocation_audits_pass_for_all_policies() {
        let model = reference_bundle();
        let policies = [
            Policy::CmuPreemptive,
            Policy::CmuNonpreemptive,
            Policy::StaticPriority(vec![0, 1]),
            Policy::StaticPriority(vec![1, 0]),
            Policy::FixedFraction,
        ];
        for policy in policies {
            let params = PrelimitParams::new(16, policy.clone(), 10.0);
            let (log, _) = simulate_system(&model, &zero_strategy(), &params, 7).unwrap();
            let report = audit_event_log(&log);
            assert!(report.clean(), "{policy:?}: {report:?}");
        }
    }

    #[test]
    fn determinism_per_seed() {
        let model = reference_bundle();
        let params = PrelimitParams::new(16, Policy::CmuPreemptive, 5.0);
        let strategy = AdversaryStrategy::constant(0.1, 2.0, vec![1.0, 1.0, -1.0, -1.0]).unwrap();
        let a = estimate_qcp_cost(&model, &strategy, &params, 8, 42).unwrap();
        let b = estimate_qcp_cost(&model, &strategy, &params, 8, 42).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.std_error, b.std_error);
        assert_eq!(a.divergence, b.divergence);
    }

    #[test]
    fn zero_adversary_cost_is_pure_holding() {
        let model = reference_bundle();
        let params = PrelimitParams::new(16, Policy::CmuPreemptive, 20.0);
        let est = estimate_qcp_cost(&model, &zero_strategy(), &params, 16, 5).unwrap();
        assert!(est.divergence.iter().all(|&d| d == 0.0));
        assert!(est.holding > 0.0);
        assert_eq!(est.mean, est.holding);
    }

    #[test]
    fn collapse_metric_zero_trajectory() {
        let model = reference_bundle();
        // horizon tiny and empty start: the queue may stay empty
        let params = PrelimitParams {
            n: 4,
            policy: Policy::CmuPreemptive,
            horizon: 0.01,
            output_points: 4,
            event_cap: 1000,
        };
        let (_, traj) = simulate_system(&model, &zero_strategy(), &params, 2).unwrap();
        if traj.x_hat.iter().all(|&x| x == 0.0) {
            let table = CurveTable::with_default_range(&model.system, &model.cost, 256, 20.0);
            assert_eq!(collapse_metric(&traj, &table, &model.system), 0.0);
        }
    }

    #[test]
    fn single_class_collapse_is_tiny_without_second_order_service() {
        // mu_hat = 0 keeps theta^n = theta, so the curve is the exact
        // identity on workload
        let system =
            SystemConfig::new(vec![1.0], vec![1.0], vec![-0.5], vec![0.0], vec![0.0]).unwrap();
        let cost = CostModel::new(vec![1.0], vec![2.0]).unwrap();
        let divergence = DivergenceModel::new(vec![1.0], vec![1.0], 2.0).unwrap();
        let discount = Discount::exponential(1.0).unwrap();
        let model = ModelBundle::new(system, cost, divergence, discount).unwrap();
        let table = CurveTable::with_default_range(&model.system, &model.cost, 1024, 20.0);
        for &n in &[16u64, 64] {
            let params = PrelimitParams::new(n, Policy::CmuPreemptive, 10.0);
            let (_, traj) = simulate_system(&model, &zero_strategy(), &params, 9).unwrap();
            let m = collapse_metric(&traj, &table, &model.system);
            assert!(m <= 1e-8, "single-class collapse metric {m} at n={n}");
        }
    }

    #[test]
    fn scaled_regulator_is_nondecreasing_and_complementary() {
        // theta^n . Y_hat = sqrt(n) (t - sum_i T_i(t)) for work-conserving
        // policies: nondecreasing, and flat while the system is busy
        let model = reference_bundle();
        let rates = model.system.scaled_rates(16).unwrap();
        let theta_n = rates.theta_n();
        for policy in [Policy::CmuPreemptive, Policy::CmuNonpreemptive] {
            let params = PrelimitParams {
                n: 16,
                policy,
                horizon: 10.0,
                output_points: 1000,
                event_cap: 1_000_000,
            };
            let (_, traj) = simulate_system(&model, &zero_strategy(), &params, 11).unwrap();
            let mut prev = 0.0f64;
            for k in 0..traj.grid_len() {
                let y: f64 = theta_n
                    .iter()
                    .zip(traj.y_hat_at(k, 2))
                    .map(|(&th, &v)| th * v)
                    .sum();
                let t = traj.times[k];
                assert!(y >= prev - 1e-8 * (1.0 + t), "regulator decreased at t={t}");
                if k > 0 {
                    let was_busy = traj.x_hat_at(k - 1, 2).iter().any(|&x| x > 0.0);
                    if was_busy && traj.x_hat_at(k, 2).iter().any(|&x| x > 0.0) {
                        // between busy samples the increase can only come
                        // from an idle stretch shorter than one event gap
                        let dt = t - traj.times[k - 1];
                        assert!(
                            y - prev <= 4.0 * dt + 1e-9,
                            "regulator grew while busy at t={t}"
                        );
                    }
                }
                prev = y;
            }
        }
    }

    #[test]
    fn policy_parsing_round_trip() {
        for name in [
            "cmu_preemptive",
            "cmu_nonpreemptive",
            "fixed_fraction",
            "static_priority:2,1",
        ] {
            let p = Policy::parse(name).unwrap();
            assert_eq!(p.name(), name);
        }
        assert!(Policy::parse("nonsense").is_err());
        assert!(Policy::parse("static_priority:0,1").is_err());
    }

    #[test]
    fn event_cap_triggers_overflow() {
        let model = reference_bundle();
        let params = PrelimitParams {
            n: 64,
            policy: Policy::CmuPreemptive,
            horizon: 20.0,
            output_points: 16,
            event_cap: 50,
        };
        let err = simulate_system(&model, &zero_strategy(), &params, 1).unwrap_err();
        assert!(matches!(err, Error::HorizonOverflow { cap: 50 }));
    }
}
