//! Continuous piecewise-linear barriers and their routing classification.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Durations below this are rejected; integrality tests for routing use the
/// same tolerance, since user input arrives as floating point.
pub const DURATION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BarrierError {
    #[error("barrier needs at least one segment")]
    NoSegments,
    #[error("segment {index} has duration {duration}, below the minimum {DURATION_EPS}")]
    DegenerateSegment { index: usize, duration: f64 },
    #[error("non-finite barrier parameter: {0}")]
    NonFinite(f64),
    #[error("time {t} outside the barrier domain [0, {horizon}]")]
    OutOfDomain { t: f64, horizon: f64 },
    #[error("rescale factor must be positive and finite, got {0}")]
    BadRescale(f64),
}

/// A continuous piecewise-linear barrier: value `intercept` at t = 0, then
/// ordered `(slope, duration)` segments. Each segment starts where the
/// previous one ends, so the barrier is continuous by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    intercept: f64,
    segments: Vec<(f64, f64)>,
}

/// The most specific analytic route available for a barrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierClass {
    /// Single segment, horizon at most 1: closed-form expression.
    ClosedFormShortHorizon,
    /// Single segment, integer horizon: one-block determinant integral.
    LinearIntegerHorizon,
    /// Single segment, non-integer horizon: two-block determinant integral.
    LinearRealHorizon,
    /// Two segments with integer durations.
    OneChangeIntegerSegments,
    /// Three unit-duration segments.
    TwoChangeUnitSegments,
    /// No analytic formula; Monte Carlo only.
    Unsupported,
}

fn is_integer(x: f64) -> bool {
    (x - x.round()).abs() <= DURATION_EPS && x.round() >= 1.0
}

fn is_unit(x: f64) -> bool {
    (x - 1.0).abs() <= DURATION_EPS
}

impl BarrierSpec {
    pub fn new(intercept: f64, segments: Vec<(f64, f64)>) -> Result<Self, BarrierError> {
        if segments.is_empty() {
            return Err(BarrierError::NoSegments);
        }
        if !intercept.is_finite() {
            return Err(BarrierError::NonFinite(intercept));
        }
        for (index, &(slope, duration)) in segments.iter().enumerate() {
            if !slope.is_finite() || !duration.is_finite() {
                return Err(BarrierError::NonFinite(if slope.is_finite() { duration } else { slope }));
            }
            if duration < DURATION_EPS {
                return Err(BarrierError::DegenerateSegment { index, duration });
            }
        }
        Ok(Self { intercept, segments })
    }

    /// Single linear segment `a + b t` on [0, T].
    pub fn linear(a: f64, b: f64, t: f64) -> Result<Self, BarrierError> {
        Self::new(a, vec![(b, t)])
    }

    /// One slope change: `a + b t` on [0, T], then slope `b2` for T2 more.
    pub fn one_change(a: f64, b: f64, b2: f64, t1: f64, t2: f64) -> Result<Self, BarrierError> {
        Self::new(a, vec![(b, t1), (b2, t2)])
    }

    /// Two slope changes over three unit segments.
    pub fn two_change(a: f64, b: f64, b2: f64, b3: f64) -> Result<Self, BarrierError> {
        Self::new(a, vec![(b, 1.0), (b2, 1.0), (b3, 1.0)])
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    pub fn horizon(&self) -> f64 {
        self.segments.iter().map(|&(_, d)| d).sum()
    }

    /// Barrier height at time `t` in [0, horizon].
    pub fn evaluate(&self, t: f64) -> Result<f64, BarrierError> {
        let horizon = self.horizon();
        if !t.is_finite() || t < 0.0 || t > horizon {
            return Err(BarrierError::OutOfDomain { t, horizon });
        }
        let mut value = self.intercept;
        let mut remaining = t;
        for &(slope, duration) in &self.segments {
            if remaining <= duration {
                return Ok(value + slope * remaining);
            }
            value += slope * duration;
            remaining -= duration;
        }
        Ok(value)
    }

    pub fn classify(&self) -> BarrierClass {
        match self.segments.as_slice() {
            [(_, d)] => {
                if *d <= 1.0 + DURATION_EPS {
                    BarrierClass::ClosedFormShortHorizon
                } else if is_integer(*d) {
                    BarrierClass::LinearIntegerHorizon
                } else {
                    BarrierClass::LinearRealHorizon
                }
            }
            [(_, d1), (_, d2)] => {
                if is_integer(*d1) && is_integer(*d2) {
                    BarrierClass::OneChangeIntegerSegments
                } else {
                    BarrierClass::Unsupported
                }
            }
            [(_, d1), (_, d2), (_, d3)] => {
                if is_unit(*d1) && is_unit(*d2) && is_unit(*d3) {
                    BarrierClass::TwoChangeUnitSegments
                } else {
                    BarrierClass::Unsupported
                }
            }
            _ => BarrierClass::Unsupported,
        }
    }

    /// Barrier values at integer times 0..=N when every breakpoint falls on
    /// an integer; `None` otherwise. Computed by running sums so that equal
    /// slopes collapse to bit-identical grids.
    pub(crate) fn integer_grid_values(&self) -> Option<Vec<f64>> {
        let mut values = vec![self.intercept];
        let mut current = self.intercept;
        for &(slope, duration) in &self.segments {
            if !is_integer(duration) {
                return None;
            }
            let steps = duration.round() as usize;
            for _ in 0..steps {
                current += slope;
                values.push(current);
            }
        }
        Some(values)
    }

    /// Unit-interval slopes matching [`integer_grid_values`]; `None` when a
    /// breakpoint is off the integer grid.
    pub(crate) fn unit_interval_slopes(&self) -> Option<Vec<f64>> {
        let mut slopes = Vec::new();
        for &(slope, duration) in &self.segments {
            if !is_integer(duration) {
                return None;
            }
            for _ in 0..duration.round() as usize {
                slopes.push(slope);
            }
        }
        Some(slopes)
    }

    /// Time rescaling for epidemic windows of length `l`: observation time
    /// shrinks to t/l and the barrier scales by 1/√l, giving intercept a/√l,
    /// slopes b·√l and durations T/l.
    pub fn rescaled(&self, l: f64) -> Result<Self, BarrierError> {
        if !(l.is_finite() && l > 0.0) {
            return Err(BarrierError::BadRescale(l));
        }
        let root = l.sqrt();
        Self::new(
            self.intercept / root,
            self.segments.iter().map(|&(b, d)| (b * root, d / l)).collect(),
        )
    }
}
