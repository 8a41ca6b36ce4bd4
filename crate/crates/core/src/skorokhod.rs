//! One-dimensional Skorokhod reflection on sampled paths.
//!
//! `reflect` maps a sampled path `l` to `l(t) - min(0, inf_{s<=t} l(s))`,
//! the nonnegative reflected version; `regulator` returns the subtracted
//! running-minimum term, the minimal nondecreasing push keeping the path
//! nonnegative. Both act pointwise on the sample grid: callers generate the
//! paths themselves and control grid resolution, and for step or
//! piecewise-linear interpretations the sampled running minimum is already
//! the exact one.

use crate::error::{Error, Result};
use crate::Scalar;

/// Interpretation of samples between grid points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathKind {
    /// Right-continuous step function.
    Step,
    /// Piecewise-linear interpolation.
    Linear,
}

/// A sampled RCLL path: strictly increasing times starting at 0.
///
/// Duplicate sample times are collapsed keeping the last value, matching
/// right-continuity.
#[derive(Clone, Debug)]
pub struct SampledPath<T> {
    times: Vec<T>,
    values: Vec<T>,
    kind: PathKind,
}

impl<T: Scalar> SampledPath<T> {
    pub fn new(times: Vec<T>, values: Vec<T>, kind: PathKind) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidParameter {
                message: "sampled path needs equally many times and values, at least one".into(),
            });
        }
        if times[0] != T::zero() {
            return Err(Error::InvalidParameter {
                message: "sampled path must start at time 0".into(),
            });
        }
        let mut t_dedup: Vec<T> = Vec::with_capacity(times.len());
        let mut v_dedup: Vec<T> = Vec::with_capacity(values.len());
        for (&t, &v) in times.iter().zip(&values) {
            match t_dedup.last() {
                None => {
                    t_dedup.push(t);
                    v_dedup.push(v);
                }
                Some(&prev) if t == prev => {
                    *v_dedup.last_mut().unwrap() = v;
                }
                Some(&prev) if t > prev => {
                    t_dedup.push(t);
                    v_dedup.push(v);
                }
                Some(_) => {
                    return Err(Error::InvalidParameter {
                        message: "sample times must be nondecreasing".into(),
                    });
                }
            }
        }
        Ok(Self {
            times: t_dedup,
            values: v_dedup,
            kind,
        })
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }
    pub fn kind(&self) -> PathKind {
        self.kind
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Value at time `t` under the path's interpretation. Times before 0
    /// clamp to the first sample, after the end to the last.
    pub fn value_at(&self, t: T) -> T {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        // last index with times[idx] <= t
        let idx = self.times.partition_point(|&x| x <= t) - 1;
        match self.kind {
            PathKind::Step => self.values[idx],
            PathKind::Linear => {
                let (t0, t1) = (self.times[idx], self.times[idx + 1]);
                let (v0, v1) = (self.values[idx], self.values[idx + 1]);
                let alpha = (t - t0) / (t1 - t0);
                v0 + alpha * (v1 - v0)
            }
        }
    }
}

/// Reflected path: `l(t_k) - min(0, min_{j<=k} l(t_j))`, on the same grid.
pub fn reflect<T: Scalar>(l: &SampledPath<T>) -> SampledPath<T> {
    let mut run_min = T::infinity();
    let values = l
        .values
        .iter()
        .map(|&v| {
            run_min = run_min.min(v);
            v - run_min.min(T::zero())
        })
        .collect();
    SampledPath {
        times: l.times.clone(),
        values,
        kind: l.kind,
    }
}

/// Regulator: `-min(0, running minimum of l)`; nonnegative, nondecreasing,
/// and `reflect(l) = l + regulator(l)` holds exactly on the grid.
pub fn regulator<T: Scalar>(l: &SampledPath<T>) -> SampledPath<T> {
    let mut run_min = T::infinity();
    let values = l
        .values
        .iter()
        .map(|&v| {
            run_min = run_min.min(v);
            -run_min.min(T::zero())
        })
        .collect();
    SampledPath {
        times: l.times.clone(),
        values,
        kind: l.kind,
    }
}

/// Incremental form of the reflection used by the simulators: feed values in
/// time order, read back the reflected value and the regulator level.
#[derive(Clone, Copy, Debug)]
pub struct ReflectionState<T> {
    run_min: T,
}

impl<T: Scalar> ReflectionState<T> {
    pub fn new() -> Self {
        Self {
            run_min: T::infinity(),
        }
    }

    /// Push the next sample of the free path; returns its reflected value.
    pub fn push(&mut self, value: T) -> T {
        self.run_min = self.run_min.min(value);
        value - self.run_min.min(T::zero())
    }

    /// Current regulator level `-min(0, running minimum)`.
    pub fn regulator(&self) -> T {
        -self.run_min.min(T::zero())
    }
}

impl<T: Scalar> Default for ReflectionState<T> {
    fn default() -> Self {
        Self::new()
    }
}
