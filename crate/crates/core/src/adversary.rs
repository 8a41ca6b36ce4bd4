//! Perturbation strategies and likelihood-ratio accounting.
//!
//! The adversary perturbs the `2I` arrival/service streams through a
//! bounded, piecewise-constant feedback control: on a grid of width `delta`
//! it emits a vector `psi_hat` in `[-k, k]^{2I}` as a function of the grid
//! index and the current diffusion-scaled state. In the n-th system the
//! perturbed intensities are `lambda^n_i + psi_hat_{A,i} sqrt(lambda_i n)`
//! and `mu^n_i + psi_hat_{S,i} sqrt(mu_i n)`; in the limit the same
//! `psi_hat` drifts the driving Brownian motions.
//!
//! Each stream carries a log likelihood-ratio process `l(t)` between the
//! perturbed and reference models. For a counting stream with piecewise
//! constant intensity `psi` and reference rate `r`,
//!
//! ```text
//! l(t) = sum_{events <= t} log(psi / r) - int_0^t (psi(s) - r) dClock(s)
//! ```
//!
//! where the clock is real time for arrival streams and cumulative service
//! time for service streams. The smooth part
//! `G(t) = int (psi log(psi/r) - psi + r) dClock` is the compensator of the
//! decomposition `l = H + G` with `H` a martingale under the perturbed
//! measure. For a Brownian stream simulated under the perturbed measure,
//! `l(t) = int psi_hat dB^Q + 1/2 int psi_hat^2 ds` with the analogous
//! split.
//!
//! The divergence penalty of one stream is `int rho(t) g(l(t)) dt`.

use crate::error::{Error, Result};
use crate::model::{stream_of_index, Discount, DivergenceModel, StreamKind};
use crate::skorokhod::SampledPath;
use crate::{scalar, Scalar};

/// Named state-feedback rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeedbackRule {
    /// Push arrivals of every empty class: `psi_hat_{A,i} = k 1{x_hat_i = 0}`,
    /// no service perturbation.
    BoundaryPush,
}

impl FeedbackRule {
    pub fn name(self) -> &'static str {
        match self {
            FeedbackRule::BoundaryPush => "boundary",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "boundary" => Ok(FeedbackRule::BoundaryPush),
            other => Err(Error::InvalidParameter {
                message: format!("unknown feedback rule '{other}'"),
            }),
        }
    }
}

#[derive(Clone, Debug)]
enum Rule<T> {
    Zero,
    Constant(Vec<T>),
    /// Rows indexed by grid index; beyond the last row the perturbation
    /// returns to zero.
    Schedule(Vec<Vec<T>>),
    Feedback(FeedbackRule),
}

/// A bounded piecewise-constant feedback strategy on the `delta`-grid.
#[derive(Clone, Debug)]
pub struct AdversaryStrategy<T> {
    delta: T,
    bound: T,
    rule: Rule<T>,
    id: String,
}

impl<T: Scalar> AdversaryStrategy<T> {
    fn check_grid(delta: T, bound: T) -> Result<()> {
        if !(delta > T::zero()) {
            return Err(Error::InvalidParameter {
                message: format!("adversary delta must be positive, got {delta}"),
            });
        }
        if !(bound > T::zero()) {
            return Err(Error::InvalidParameter {
                message: format!("adversary bound must be positive, got {bound}"),
            });
        }
        Ok(())
    }

    pub fn zero(delta: T, bound: T) -> Result<Self> {
        Self::check_grid(delta, bound)?;
        Ok(Self {
            delta,
            bound,
            rule: Rule::Zero,
            id: "zero".into(),
        })
    }

    pub fn constant(delta: T, bound: T, values: Vec<T>) -> Result<Self> {
        Self::check_grid(delta, bound)?;
        let id = format!(
            "const[{}]",
            values
                .iter()
                .map(|v| format!("{}", v.to_f64_lossy()))
                .collect::<Vec<_>>()
                .join(",")
        );
        Ok(Self {
            delta,
            bound,
            rule: Rule::Constant(values),
            id,
        })
    }

    pub fn schedule(delta: T, bound: T, rows: Vec<Vec<T>>) -> Result<Self> {
        Self::check_grid(delta, bound)?;
        let id = format!("schedule[rows={}]", rows.len());
        Ok(Self {
            delta,
            bound,
            rule: Rule::Schedule(rows),
            id,
        })
    }

    pub fn feedback(delta: T, bound: T, rule: FeedbackRule) -> Result<Self> {
        Self::check_grid(delta, bound)?;
        let id = format!("feedback_{}[k={}]", rule.name(), bound.to_f64_lossy());
        Ok(Self {
            delta,
            bound,
            rule: Rule::Feedback(rule),
            id,
        })
    }

    /// Grid width of the piecewise-constant control.
    pub fn delta(&self) -> T {
        self.delta
    }
    /// Truncation level `k`.
    pub fn bound(&self) -> T {
        self.bound
    }
    /// Stable identifier used in CSV output.
    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn is_zero(&self) -> bool {
        matches!(self.rule, Rule::Zero)
    }

    /// Evaluate the control for grid interval `grid_index` given the
    /// current scaled state. Deterministic; every component is clamped to
    /// `[-k, k]`. The layout of `out` is arrivals `0..I`, services `I..2I`.
    pub fn eval_into(&self, grid_index: usize, x_hat: &[T], out: &mut [T]) {
        match &self.rule {
            Rule::Zero => out.fill(T::zero()),
            Rule::Constant(v) => {
                debug_assert_eq!(v.len(), out.len());
                out.copy_from_slice(v);
            }
            Rule::Schedule(rows) => match rows.get(grid_index) {
                Some(row) => {
                    debug_assert_eq!(row.len(), out.len());
                    out.copy_from_slice(row);
                }
                None => out.fill(T::zero()),
            },
            Rule::Feedback(FeedbackRule::BoundaryPush) => {
                let class_count = out.len() / 2;
                debug_assert_eq!(x_hat.len(), class_count);
                out.fill(T::zero());
                for i in 0..class_count {
                    if x_hat[i] == T::zero() {
                        out[i] = self.bound;
                    }
                }
            }
        }
        for v in out.iter_mut() {
            *v = (*v).max(-self.bound).min(self.bound);
        }
    }

    /// Convenience wrapper returning a fresh vector of length `2 * classes`.
    pub fn eval(&self, grid_index: usize, x_hat: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); 2 * x_hat.len()];
        self.eval_into(grid_index, x_hat, &mut out);
        out
    }
}

/// One sample of a log likelihood-ratio process.
#[derive(Clone, Copy, Debug)]
pub struct RnSample<T> {
    /// `l(t) = log dQ/dP (t)`.
    pub log_ratio: T,
    /// Martingale part `H(t)`.
    pub martingale: T,
    /// Compensator part `G(t)`.
    pub compensator: T,
}

/// Sampled log likelihood-ratio path of one stream, with its `H + G` split.
#[derive(Clone, Debug)]
pub struct RnExponent<T> {
    pub times: Vec<T>,
    pub log_ratio: Vec<T>,
    pub martingale: Vec<T>,
    pub compensator: Vec<T>,
}

impl<T: Scalar> RnExponent<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Exponent accumulator for one counting stream.
///
/// The caller advances an increasing clock (real time for arrivals,
/// cumulative service time for service streams), switches the intensity at
/// control-grid boundaries, and records events of this stream. Sums are
/// aggregated per constant-intensity segment, so on a stream whose
/// intensity never changes the accumulated exponent reproduces the closed
/// form `N log(psi/r) - (psi - r) * clock` bit for bit.
#[derive(Clone, Debug)]
pub struct PoissonRnAccumulator<T> {
    reference: T,
    clock: T,
    // flushed totals over completed segments
    jumps: T,
    compensator: T,
    g_term: T,
    // current segment
    seg_psi: T,
    seg_log_ratio: T,
    seg_start: T,
    seg_events: u64,
}

impl<T: Scalar> PoissonRnAccumulator<T> {
    pub fn new(reference: T) -> Result<Self> {
        if !(reference > T::zero()) {
            return Err(Error::NonPositiveIntensity {
                stream: "reference".into(),
                value: reference.to_f64_lossy(),
            });
        }
        Ok(Self {
            reference,
            clock: T::zero(),
            jumps: T::zero(),
            compensator: T::zero(),
            g_term: T::zero(),
            seg_psi: reference,
            seg_log_ratio: T::zero(),
            seg_start: T::zero(),
            seg_events: 0,
        })
    }

    pub fn reference(&self) -> T {
        self.reference
    }

    pub fn intensity(&self) -> T {
        self.seg_psi
    }

    fn flush(&mut self) {
        let elapsed = self.clock - self.seg_start;
        if self.seg_events > 0 {
            self.jumps += scalar::<T>(self.seg_events as f64) * self.seg_log_ratio;
        }
        if elapsed > T::zero() {
            self.compensator += (self.seg_psi - self.reference) * elapsed;
            self.g_term +=
                (self.seg_psi * self.seg_log_ratio - self.seg_psi + self.reference) * elapsed;
        }
        self.seg_start = self.clock;
        self.seg_events = 0;
    }

    /// Switch to a new intensity level, closing the current segment.
    pub fn set_intensity(&mut self, psi: T) -> Result<()> {
        if !(psi > T::zero()) {
            return Err(Error::NonPositiveIntensity {
                stream: "perturbed".into(),
                value: psi.to_f64_lossy(),
            });
        }
        if psi != self.seg_psi {
            self.flush();
            self.seg_psi = psi;
            self.seg_log_ratio = if psi == self.reference {
                T::zero()
            } else {
                (psi / self.reference).ln()
            };
        }
        Ok(())
    }

    /// Advance the stream's clock; must not run backwards.
    pub fn advance_clock(&mut self, clock: T) {
        debug_assert!(clock >= self.clock);
        self.clock = clock;
    }

    /// Record one event of this stream at the current clock.
    pub fn record_event(&mut self) {
        self.seg_events += 1;
    }

    /// Sample at the current clock.
    pub fn sample(&self) -> RnSample<T> {
        self.sample_at(self.clock)
    }

    /// Sample at a clock value inside the current segment (between the last
    /// intensity switch and now).
    pub fn sample_at(&self, clock: T) -> RnSample<T> {
        debug_assert!(clock >= self.seg_start && clock <= self.clock);
        let elapsed = clock - self.seg_start;
        let jumps = self.jumps + scalar::<T>(self.seg_events as f64) * self.seg_log_ratio;
        let comp = self.compensator + (self.seg_psi - self.reference) * elapsed;
        let g = self.g_term
            + (self.seg_psi * self.seg_log_ratio - self.seg_psi + self.reference) * elapsed;
        let log_ratio = jumps - comp;
        RnSample {
            log_ratio,
            martingale: log_ratio - g,
            compensator: g,
        }
    }
}

/// Evaluate the exponent of one counting stream along explicit data: jump
/// times, a piecewise-constant intensity path, and a constant reference
/// rate, sampled at `sample_times`. The clock is the path's own time axis,
/// so this covers arrival streams directly and service streams whenever the
/// caller passes the service clock.
pub fn rn_exponent_poisson<T: Scalar>(
    event_times: &[T],
    intensity: &SampledPath<T>,
    reference: T,
    sample_times: &[T],
) -> Result<RnExponent<T>> {
    let mut acc = PoissonRnAccumulator::new(reference)?;
    let mut out = RnExponent {
        times: Vec::with_capacity(sample_times.len()),
        log_ratio: Vec::with_capacity(sample_times.len()),
        martingale: Vec::with_capacity(sample_times.len()),
        compensator: Vec::with_capacity(sample_times.len()),
    };
    // merge intensity switches, events, and sample times in clock order;
    // at equal clocks apply switches first, then events, then sample
    let mut ev = event_times.iter().copied().peekable();
    let mut sw = intensity
        .times()
        .iter()
        .copied()
        .zip(intensity.values().iter().copied())
        .peekable();
    for &t in sample_times {
        loop {
            let next_switch = sw.peek().map(|&(ts, _)| ts);
            let next_event = ev.peek().copied();
            let take_switch = match (next_switch, next_event) {
                (Some(ts), Some(te)) => {
                    if ts <= t && ts <= te {
                        true
                    } else if te <= t {
                        false
                    } else {
                        break;
                    }
                }
                (Some(ts), None) if ts <= t => true,
                (None, Some(te)) if te <= t => false,
                _ => break,
            };
            if take_switch {
                let (ts, psi) = sw.next().unwrap();
                acc.advance_clock(ts);
                acc.set_intensity(psi)?;
            } else {
                let te = ev.next().unwrap();
                acc.advance_clock(te);
                acc.record_event();
            }
        }
        acc.advance_clock(t);
        let s = acc.sample();
        out.times.push(t);
        out.log_ratio.push(s.log_ratio);
        out.martingale.push(s.martingale);
        out.compensator.push(s.compensator);
    }
    Ok(out)
}

/// Exponent accumulator for one Brownian stream driven under the perturbed
/// measure: per Euler step of width `dt` with control `psi_hat` and
/// perturbed-measure increment `db_q`, the martingale part gains
/// `psi_hat * db_q` and the compensator `psi_hat^2 dt / 2`.
#[derive(Clone, Copy, Debug, Default)]
pub struct BrownianRnAccumulator<T> {
    martingale: T,
    compensator: T,
}

impl<T: Scalar> BrownianRnAccumulator<T> {
    pub fn new() -> Self {
        Self {
            martingale: T::zero(),
            compensator: T::zero(),
        }
    }

    pub fn step(&mut self, psi_hat: T, db_q: T, dt: T) {
        self.martingale += psi_hat * db_q;
        self.compensator += scalar::<T>(0.5) * psi_hat * psi_hat * dt;
    }

    pub fn sample(&self) -> RnSample<T> {
        RnSample {
            log_ratio: self.martingale + self.compensator,
            martingale: self.martingale,
            compensator: self.compensator,
        }
    }
}

/// Exponent of a Brownian stream on a uniform grid: `psi_hat` holds the
/// per-step control values, `increments` the perturbed-measure Brownian
/// increments of each step.
pub fn rn_exponent_brownian<T: Scalar>(
    psi_hat: &[T],
    increments: &[T],
    step: T,
) -> Result<RnExponent<T>> {
    if psi_hat.len() != increments.len() {
        return Err(Error::InvalidParameter {
            message: "psi_hat and increments must have the same length".into(),
        });
    }
    let mut acc = BrownianRnAccumulator::new();
    let steps = psi_hat.len();
    let mut out = RnExponent {
        times: Vec::with_capacity(steps + 1),
        log_ratio: Vec::with_capacity(steps + 1),
        martingale: Vec::with_capacity(steps + 1),
        compensator: Vec::with_capacity(steps + 1),
    };
    let push = |t: T, s: RnSample<T>, out: &mut RnExponent<T>| {
        out.times.push(t);
        out.log_ratio.push(s.log_ratio);
        out.martingale.push(s.martingale);
        out.compensator.push(s.compensator);
    };
    push(T::zero(), acc.sample(), &mut out);
    for k in 0..steps {
        acc.step(psi_hat[k], increments[k], step);
        push(scalar::<T>((k + 1) as f64) * step, acc.sample(), &mut out);
    }
    Ok(out)
}

/// Pathwise divergence penalties, one per stream: trapezoid quadrature of
/// `rho(t) g_{j,i}(l_{j,i}(t))` over each exponent's sample grid, cut at
/// `horizon`. Streams are flat-indexed (arrivals first). The expectation
/// over replications is the caller's.
pub fn divergence_penalty<T: Scalar>(
    exponents: &[RnExponent<T>],
    divergence: &DivergenceModel<T>,
    discount: &Discount<T>,
    horizon: T,
) -> Vec<T> {
    let class_count = divergence.class_count();
    debug_assert_eq!(exponents.len(), 2 * class_count);
    exponents
        .iter()
        .enumerate()
        .map(|(s, exp)| {
            let (kind, class) = stream_of_index(s, class_count);
            integrate_discounted(&exp.times, &exp.log_ratio, horizon, |t, l| {
                discount.weight(t) * divergence.penalty(kind, class, l)
            })
        })
        .collect()
}

/// Trapezoid rule for `int f(t, v(t)) dt` over sampled `(times, values)`,
/// truncated at `horizon`.
pub fn integrate_discounted<T: Scalar>(
    times: &[T],
    values: &[T],
    horizon: T,
    mut f: impl FnMut(T, T) -> T,
) -> T {
    debug_assert_eq!(times.len(), values.len());
    let mut acc = T::zero();
    let half: T = scalar(0.5);
    for k in 1..times.len() {
        let (t0, t1) = (times[k - 1], times[k]);
        if t0 >= horizon {
            break;
        }
        let t1c = t1.min(horizon);
        let dt = t1c - t0;
        if dt <= T::zero() {
            continue;
        }
        let f0 = f(t0, values[k - 1]);
        let f1 = f(t1c, values[k]);
        acc += half * dt * (f0 + f1);
    }
    acc
}

/// Stream kind/class of a flat index; re-exported for closure-free callers.
pub fn stream_kind_of(index: usize, class_count: usize) -> (StreamKind, usize) {
    stream_of_index(index, class_count)
}
