//! First-passage (survival) probabilities for the Slepian process
//! `S(t) = W(t) - W(t+1)` staying below a piecewise-linear barrier,
//! conditioned on `S(0) = x`.
//!
//! Routes:
//! * single segment, horizon ≤ 1 — closed form,
//! * single segment, integer horizon — one-block determinant integral,
//! * single segment, fractional horizon — two-block determinant integral,
//! * one slope change over integer segments, and two slope changes over
//!   three unit segments — one-block determinant integrals over the
//!   barrier's integer grid.
//!
//! Determinant routes integrate either over the process values at integer
//! times (a rectangular box, the default) or over the underlying path
//! values with chained lower limits; both accept a `reduced` flag that
//! integrates the innermost variable analytically into a Φ column.
//!
//! Dimension caps accept up to six raw integration variables, but the
//! nested rule resolves at most four axes comfortably at tight tolerances
//! (integer horizons to 5, fractional horizons below 2). Deeper requests
//! either need a loosened tolerance or return an explicit accuracy error;
//! the Monte Carlo sampler covers them.

use crate::barrier::{BarrierClass, BarrierSpec, DURATION_EPS};
use crate::gaussian::{cdf, ln_cdf, pdf, LN_SQRT_2PI};
use crate::km;
use crate::quad::{self, Axis, LowerBound, QuadError, QuadResult, Region, UpperBound, MAX_DIMS};
use thiserror::Error;

/// How a probability should be computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Auto,
    ClosedForm,
    Determinant,
    MonteCarlo,
}

/// A survival-probability request.
#[derive(Debug, Clone)]
pub struct FptRequest {
    pub barrier: BarrierSpec,
    pub start_value: f64,
    pub method: Method,
    pub tol: f64,
}

/// The route actually planned or taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteKind {
    ClosedForm,
    Determinant { dims: usize, reduced: bool },
    MonteCarlo,
}

impl RouteKind {
    pub fn label(&self) -> String {
        match self {
            RouteKind::ClosedForm => "closed-form".into(),
            RouteKind::Determinant { dims, reduced } => {
                format!("determinant[dims={dims},reduced={reduced}]")
            }
            RouteKind::MonteCarlo => "monte-carlo".into(),
        }
    }
}

/// Value with quadrature diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct Analytic {
    pub probability: f64,
    pub error_estimate: f64,
    pub evaluations: u64,
}

/// Full solution as reported to callers.
#[derive(Debug, Clone)]
pub struct FptSolution {
    pub probability: f64,
    pub route: RouteKind,
    pub error_estimate: f64,
    pub evaluations: u64,
}

#[derive(Debug, Clone, Error)]
pub enum FptError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("capability error: {0}")]
    Capability(String),
    #[error("accuracy error: {0}")]
    Accuracy(String),
}

impl From<QuadError> for FptError {
    fn from(e: QuadError) -> Self {
        match e {
            QuadError::ToleranceNotMet { best } => FptError::Accuracy(format!(
                "quadrature tolerance not met: best {} ± {} after {} evaluations",
                best.value, best.error_estimate, best.evaluations
            )),
            QuadError::TooManyDims(d) => {
                FptError::Capability(format!("{d} integration axes exceed the engine limit"))
            }
            other => FptError::Domain(other.to_string()),
        }
    }
}

/// Which coordinates the determinant routes integrate over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateForm {
    /// Process values at integer times: rectangular domain (default).
    ProcessValues,
    /// Underlying path values: chained lower limits, as the vector
    /// constructions are written.
    PathValues,
}

/// Evaluation switches for the determinant routes.
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// Integrate the innermost variable analytically (one fewer axis).
    pub reduced: bool,
    pub coords: CoordinateForm,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { reduced: true, coords: CoordinateForm::ProcessValues }
    }
}

fn require_finite(name: &str, v: f64) -> Result<(), FptError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(FptError::Domain(format!("{name} must be finite, got {v}")))
    }
}

/// Clamp tiny quadrature excursions outside [0,1]; anything larger than
/// 10·tol is treated as a failed integration, not silently hidden.
fn clamp_probability(p: f64, tol: f64) -> Result<f64, FptError> {
    let slack = 10.0 * tol;
    if p < -slack || p > 1.0 + slack {
        return Err(FptError::Accuracy(format!(
            "probability estimate {p} outside [0,1] by more than {slack}"
        )));
    }
    Ok(p.clamp(0.0, 1.0))
}

fn check_tol(tol: f64) -> Result<(), FptError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(FptError::Domain(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// Survival across `a + bt` on (0, T] with `T <= 1`, in closed form.
pub fn survival_closed_short(a: f64, b: f64, t: f64, x: f64) -> Result<f64, FptError> {
    require_finite("a", a)?;
    require_finite("b", b)?;
    require_finite("x", x)?;
    if !(t > 0.0 && t <= 1.0 + DURATION_EPS) {
        return Err(FptError::Domain(format!("horizon {t} outside (0, 1]")));
    }
    if x >= a {
        return Ok(0.0);
    }
    let t = t.min(1.0);
    let z = t / (2.0 - t);
    let b1 = 0.5 * (a + x) + b;
    let a1 = 0.5 * (a - x);
    let sz = z.sqrt();
    let term1 = cdf((b1 * z + a1) / sz);
    let term2 = (-2.0 * a1 * b1 + ln_cdf((b1 * z - a1) / sz)).exp();
    let p = term1 - term2;
    // absorb at most rounding-level excursions
    if !(-1e-12..=1.0 + 1e-12).contains(&p) {
        return Err(FptError::Accuracy(format!("closed form produced {p}")));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Weighted closed form `F(T|x)·φ(x)` evaluated in log space, used as the
/// integrand of the unconditional short-horizon probability.
fn closed_short_weighted(a: f64, b: f64, t: f64, x: f64) -> f64 {
    if x >= a {
        return 0.0;
    }
    let z = t / (2.0 - t);
    let b1 = 0.5 * (a + x) + b;
    let a1 = 0.5 * (a - x);
    let sz = z.sqrt();
    let ln_phi_x = -0.5 * x * x - LN_SQRT_2PI;
    let term1 = cdf((b1 * z + a1) / sz) * pdf(x);
    let term2 = (-2.0 * a1 * b1 + ln_cdf((b1 * z - a1) / sz) + ln_phi_x).exp();
    term1 - term2
}

// ---------------------------------------------------------------------------
// integer-horizon determinant engine
// ---------------------------------------------------------------------------

/// Integrand over the integer barrier grid. `p` holds the integration
/// variables; the conditioning value `x` rides along unless the result is
/// being accumulated unconditionally, in which case `p[0]` is the start
/// value and the remaining entries are the process values.
struct IntegerGrid {
    slopes: Vec<f64>,
    bvals: Vec<f64>,
    intercept: f64,
    reduced: bool,
    coords: CoordinateForm,
    unconditional: bool,
    x: f64,
}

impl IntegerGrid {
    fn horizon(&self) -> usize {
        self.slopes.len()
    }

    fn dims(&self) -> usize {
        let n = self.horizon();
        let base = if self.reduced { n - 1 } else { n };
        base + usize::from(self.unconditional)
    }

    /// x-coordinate variables `x₂..x_{N+1}` from the integration point.
    fn path_vars(&self, x: f64, p: &[f64]) -> Vec<f64> {
        let n = self.horizon();
        let mut vars = vec![0.0f64; n];
        match self.coords {
            CoordinateForm::ProcessValues => {
                let mut xk = -x;
                for (k, &s) in p.iter().enumerate() {
                    xk -= s;
                    vars[k] = xk;
                }
            }
            CoordinateForm::PathValues => {
                vars[..p.len()].copy_from_slice(p);
            }
        }
        if self.reduced {
            // innermost path value pinned to its lower limit x_N - B(N);
            // the reduced column integrates over everything above it
            let x_prev = if n >= 2 { vars[n - 2] } else { -x };
            vars[n - 1] = x_prev - self.bvals[n];
        }
        vars
    }

    fn eval(&self, point: &[f64]) -> f64 {
        let (x, p) = if self.unconditional {
            (point[0], &point[1..])
        } else {
            (self.x, point)
        };
        let vars = self.path_vars(x, p);
        let block = km::block_from_unit_slopes(self.intercept, &self.slopes, x, &vars)
            .expect("grid dimensions are validated at construction");
        let extra = if self.unconditional { 0.0 } else { 0.5 * x * x + LN_SQRT_2PI };
        if self.reduced {
            km::km_signed_log_reduced(&block, extra).value()
        } else {
            km::km_signed_log(&block, extra).value()
        }
    }

    fn region(&self) -> Result<Region, QuadError> {
        let n = self.horizon();
        let mut axes = Vec::new();
        if self.unconditional {
            axes.push(Axis::with_hint(
                LowerBound::MinusInfinity,
                UpperBound::Constant(self.bvals[0]),
                0.0,
                1.0,
            ));
        }
        let vars = if self.reduced { n - 1 } else { n };
        match self.coords {
            CoordinateForm::ProcessValues => {
                // each process value is marginally standard normal
                for k in 1..=vars {
                    axes.push(Axis::with_hint(
                        LowerBound::MinusInfinity,
                        UpperBound::Constant(self.bvals[k]),
                        0.0,
                        1.0,
                    ));
                }
            }
            CoordinateForm::PathValues => {
                debug_assert!(!self.unconditional, "path coordinates are conditional-only");
                // the path value at time k+2 given the anchor at time 1 is
                // centered at -x with variance k+1
                for k in 0..vars {
                    let lower = if k == 0 {
                        LowerBound::Constant(-self.x - self.bvals[1])
                    } else {
                        LowerBound::Chain { offset: -self.bvals[k + 1], terms: vec![(k - 1, 1.0)] }
                    };
                    axes.push(Axis::with_hint(
                        lower,
                        UpperBound::PlusInfinity,
                        -self.x,
                        ((k + 1) as f64).sqrt(),
                    ));
                }
            }
        }
        Region::new(axes)
    }
}

fn integer_grid_survival(
    barrier: &BarrierSpec,
    x: f64,
    tol: f64,
    opts: EvalOptions,
) -> Result<Analytic, FptError> {
    let slopes = barrier
        .unit_interval_slopes()
        .ok_or_else(|| FptError::Domain("barrier breakpoints are off the integer grid".into()))?;
    let bvals = barrier.integer_grid_values().expect("same integrality test");
    let n = slopes.len();
    if n > MAX_DIMS {
        return Err(FptError::Capability(format!(
            "integer horizon {n} exceeds the {MAX_DIMS}-dimensional quadrature cap; use the Monte Carlo sampler"
        )));
    }
    if x >= barrier.intercept() {
        return Ok(Analytic { probability: 0.0, error_estimate: 0.0, evaluations: 0 });
    }
    let grid = IntegerGrid {
        slopes,
        bvals,
        intercept: barrier.intercept(),
        reduced: opts.reduced,
        coords: opts.coords,
        unconditional: false,
        x,
    };
    finish_grid(grid, tol)
}

fn integer_grid_unconditional(
    barrier: &BarrierSpec,
    tol: f64,
    opts: EvalOptions,
) -> Result<Analytic, FptError> {
    let slopes = barrier
        .unit_interval_slopes()
        .ok_or_else(|| FptError::Domain("barrier breakpoints are off the integer grid".into()))?;
    let bvals = barrier.integer_grid_values().expect("same integrality test");
    if slopes.len() > MAX_DIMS {
        return Err(FptError::Capability(format!(
            "integer horizon {} exceeds the {MAX_DIMS}-dimensional quadrature cap",
            slopes.len()
        )));
    }
    let grid = IntegerGrid {
        slopes,
        bvals,
        intercept: barrier.intercept(),
        reduced: opts.reduced,
        coords: CoordinateForm::ProcessValues,
        unconditional: true,
        x: f64::NAN,
    };
    finish_grid(grid, tol)
}

fn finish_grid(grid: IntegerGrid, tol: f64) -> Result<Analytic, FptError> {
    if grid.dims() == 0 {
        // fully reduced single-step survival: a closed expression
        let p = grid.eval(&[]);
        return Ok(Analytic {
            probability: clamp_probability(p, tol)?,
            error_estimate: 2e-15,
            evaluations: 1,
        });
    }
    let region = grid.region()?;
    let result: QuadResult = quad::integrate(|p| grid.eval(p), &region, tol)?;
    Ok(Analytic {
        probability: clamp_probability(result.value, tol)?,
        error_estimate: result.error_estimate,
        evaluations: result.evaluations,
    })
}

// ---------------------------------------------------------------------------
// fractional-horizon determinant engine
// ---------------------------------------------------------------------------

/// Fractional-horizon engine. Integration runs over the path's increments
/// across the alternating θ- and (1-θ)-length sub-intervals rather than the
/// path values themselves: every axis then has a fixed Gaussian envelope of
/// known scale, so no axis degenerates into an unresolvable needle as θ
/// approaches 0 or 1.
///
/// Axis layout (outermost first): optional start value, then
/// `w = v₀ + xθ` (the time-θ value recentered to 0), then alternating
/// increments `g_{2i} = v_i - u_i` (variance θ) and `g_{2i+1} = u_{i+1} - v_i`
/// (variance 1-θ). The ordered-path constraints become one-term chains
/// between adjacent increments.
struct SplitGrid {
    a: f64,
    b: f64,
    m: usize,
    theta: f64,
    reduced: bool,
    unconditional: bool,
    x: f64,
}

impl SplitGrid {
    /// Path values (u_2.., v_0..) from one integration point.
    fn reconstruct(&self, x: f64, q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.m;
        let mut v = Vec::with_capacity(m + 2);
        let mut u_tail = Vec::with_capacity(m);
        v.push(q[0] - self.theta * x);
        if m >= 1 || !self.reduced {
            // v_1 = g_2 + u_1 = g_2 - x
            v.push(q[1] - x);
        }
        for i in 1..=m {
            // u_{i+1} = g_{2i+1} + v_i
            let u_next = q[2 * i] + v[i];
            u_tail.push(u_next);
            if 2 * i + 1 < q.len() {
                // v_{i+1} = g_{2i+2} + u_{i+1}
                v.push(q[2 * i + 1] + u_next);
            }
        }
        if self.reduced {
            // v_{m+1} pinned to its lower limit; the Φ column covers the rest
            let bound = v[m] - self.a - self.b * self.theta - m as f64 * self.b;
            v.push(bound);
        }
        (u_tail, v)
    }

    fn eval(&self, point: &[f64]) -> f64 {
        let (x, q) = if self.unconditional {
            (point[0], &point[1..])
        } else {
            (self.x, point)
        };
        let (u_tail, v) = self.reconstruct(x, q);
        let (block1, block2) =
            km::split_horizon_blocks(self.a, self.b, self.m, self.theta, x, &u_tail, &v)
                .expect("split dimensions are validated at construction");
        let extra = if self.unconditional { 0.0 } else { 0.5 * x * x + LN_SQRT_2PI };
        let first = if self.reduced {
            km::km_signed_log_reduced(&block1, extra)
        } else {
            km::km_signed_log(&block1, extra)
        };
        first.mul(km::km_signed_log(&block2, 0.0)).value()
    }

    fn region(&self) -> Result<Region, QuadError> {
        let m = self.m;
        let (a, b, theta) = (self.a, self.b, self.theta);
        let sd_theta = theta.sqrt();
        let sd_comp = (1.0 - theta).sqrt();
        let mut axes = Vec::new();
        let shift = usize::from(self.unconditional);
        if self.unconditional {
            axes.push(Axis::with_hint(
                LowerBound::MinusInfinity,
                UpperBound::Constant(a),
                0.0,
                1.0,
            ));
        }
        // w = v_0 + xθ: free, centered at 0 given the time-1 anchor
        axes.push(Axis::with_hint(
            LowerBound::MinusInfinity,
            UpperBound::PlusInfinity,
            0.0,
            (theta * (1.0 - theta)).sqrt(),
        ));
        let w_axis = shift;
        let g_axis = |k: usize| shift + k; // q[k] sits on this axis
        let g_count = if self.reduced { 2 * m + 1 } else { 2 * m + 2 };
        for k in 1..g_count {
            // q[k] = g_{k+1} in increment numbering: odd k are θ-steps
            // (v_i - u_i), even k are (1-θ)-steps (u_{i+1} - v_i)
            let (lower, scale) = if k == 1 {
                // v_1 - v_0 >= -(a + bθ): g_2 >= -(a+bθ) - g_1 with
                // g_1 = u_1 - v_0 = -x(1-θ) - w
                let mut terms = vec![(w_axis, 1.0)];
                let mut offset = -a - b * theta;
                if self.unconditional {
                    terms.push((0, 1.0 - theta));
                } else {
                    offset += self.x * (1.0 - theta);
                }
                (LowerBound::Chain { offset, terms }, sd_theta)
            } else if k % 2 == 0 {
                // u_{i+1} - u_i >= -(a + ib) with i = k/2
                let i = k / 2;
                (
                    LowerBound::Chain {
                        offset: -a - i as f64 * b,
                        terms: vec![(g_axis(k - 1), -1.0)],
                    },
                    sd_comp,
                )
            } else {
                // v_{i+1} - v_i >= -(a + bθ + ib) with i = (k-1)/2
                let i = (k - 1) / 2;
                (
                    LowerBound::Chain {
                        offset: -a - b * theta - i as f64 * b,
                        terms: vec![(g_axis(k - 1), -1.0)],
                    },
                    sd_theta,
                )
            };
            axes.push(Axis::with_hint(lower, UpperBound::PlusInfinity, 0.0, scale));
        }
        Region::new(axes)
    }
}

fn split_survival(
    a: f64,
    b: f64,
    t: f64,
    x: f64,
    tol: f64,
    reduced: bool,
) -> Result<Analytic, FptError> {
    let m = t.floor() as usize;
    let theta = t - t.floor();
    if theta.abs() < DURATION_EPS || (1.0 - theta) < DURATION_EPS {
        return Err(FptError::Domain(format!(
            "horizon {t} is integral; use the integer-horizon route"
        )));
    }
    if 2 * m + 2 > MAX_DIMS {
        return Err(FptError::Capability(format!(
            "fractional horizon {t} needs {} axes, above the {MAX_DIMS}-dimensional cap; use the Monte Carlo sampler",
            2 * m + 2
        )));
    }
    if x >= a {
        return Ok(Analytic { probability: 0.0, error_estimate: 0.0, evaluations: 0 });
    }
    let grid = SplitGrid { a, b, m, theta, reduced, unconditional: false, x };
    let region = grid.region()?;
    let result = quad::integrate(|p| grid.eval(p), &region, tol)?;
    Ok(Analytic {
        probability: clamp_probability(result.value, tol)?,
        error_estimate: result.error_estimate,
        evaluations: result.evaluations,
    })
}

// ---------------------------------------------------------------------------
// public operations
// ---------------------------------------------------------------------------

/// Survival across `a + bt` over an integer horizon `n ≥ 1`.
pub fn survival_linear_integer(
    a: f64,
    b: f64,
    n: u32,
    x: f64,
    tol: f64,
) -> Result<Analytic, FptError> {
    survival_linear_integer_opts(a, b, n, x, tol, EvalOptions::default())
}

pub fn survival_linear_integer_opts(
    a: f64,
    b: f64,
    n: u32,
    x: f64,
    tol: f64,
    opts: EvalOptions,
) -> Result<Analytic, FptError> {
    require_finite("a", a)?;
    require_finite("b", b)?;
    require_finite("x", x)?;
    check_tol(tol)?;
    if n < 1 {
        return Err(FptError::Domain("integer horizon must be at least 1".into()));
    }
    let barrier = BarrierSpec::linear(a, b, n as f64).map_err(|e| FptError::Domain(e.to_string()))?;
    integer_grid_survival(&barrier, x, tol, opts)
}

/// Survival across `a + bt` over a non-integral horizon `T = m + θ`.
pub fn survival_linear_real(a: f64, b: f64, t: f64, x: f64, tol: f64) -> Result<Analytic, FptError> {
    survival_linear_real_opts(a, b, t, x, tol, true)
}

pub fn survival_linear_real_opts(
    a: f64,
    b: f64,
    t: f64,
    x: f64,
    tol: f64,
    reduced: bool,
) -> Result<Analytic, FptError> {
    require_finite("a", a)?;
    require_finite("b", b)?;
    require_finite("x", x)?;
    check_tol(tol)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(FptError::Domain(format!("horizon must be positive, got {t}")));
    }
    split_survival(a, b, t, x, tol, reduced)
}

/// Survival across a barrier with one slope change: slope `b` for `t1` whole
/// units, then slope `b2` for `t2` more.
pub fn survival_one_change(
    a: f64,
    b: f64,
    b2: f64,
    t1: u32,
    t2: u32,
    x: f64,
    tol: f64,
) -> Result<Analytic, FptError> {
    survival_one_change_opts(a, b, b2, t1, t2, x, tol, EvalOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn survival_one_change_opts(
    a: f64,
    b: f64,
    b2: f64,
    t1: u32,
    t2: u32,
    x: f64,
    tol: f64,
    opts: EvalOptions,
) -> Result<Analytic, FptError> {
    require_finite("a", a)?;
    require_finite("b", b)?;
    require_finite("b2", b2)?;
    require_finite("x", x)?;
    check_tol(tol)?;
    if t1 < 1 || t2 < 1 {
        return Err(FptError::Domain("segment durations must be at least 1".into()));
    }
    let barrier = BarrierSpec::one_change(a, b, b2, t1 as f64, t2 as f64)
        .map_err(|e| FptError::Domain(e.to_string()))?;
    integer_grid_survival(&barrier, x, tol, opts)
}

/// Survival across a barrier with two slope changes over three unit segments.
pub fn survival_two_change(
    a: f64,
    b: f64,
    b2: f64,
    b3: f64,
    x: f64,
    tol: f64,
) -> Result<Analytic, FptError> {
    survival_two_change_opts(a, b, b2, b3, x, tol, EvalOptions::default())
}

pub fn survival_two_change_opts(
    a: f64,
    b: f64,
    b2: f64,
    b3: f64,
    x: f64,
    tol: f64,
    opts: EvalOptions,
) -> Result<Analytic, FptError> {
    require_finite("a", a)?;
    require_finite("b", b)?;
    require_finite("b2", b2)?;
    require_finite("b3", b3)?;
    require_finite("x", x)?;
    check_tol(tol)?;
    let barrier =
        BarrierSpec::two_change(a, b, b2, b3).map_err(|e| FptError::Domain(e.to_string()))?;
    integer_grid_survival(&barrier, x, tol, opts)
}

/// Unconditional survival `∫ F(T|x)·φ(x) dx`: the start value is averaged
/// over the standard normal law by adding one axis to the existing integral
/// (the 1/φ(x) prefactor of the conditional integrand cancels against the
/// weight analytically).
pub fn survival_unconditional(a: f64, b: f64, t: f64, tol: f64) -> Result<Analytic, FptError> {
    require_finite("a", a)?;
    require_finite("b", b)?;
    check_tol(tol)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(FptError::Domain(format!("horizon must be positive, got {t}")));
    }
    let frac = t - t.floor();
    let integral = frac.abs() < DURATION_EPS || (1.0 - frac) < DURATION_EPS;
    if t <= 1.0 + DURATION_EPS && (t - 1.0).abs() > DURATION_EPS {
        // closed conditional form weighted by φ(x), one axis
        let t_eff = t.min(1.0);
        let region = Region::new(vec![Axis::new(
            LowerBound::MinusInfinity,
            UpperBound::Constant(a),
        )])?;
        let result = quad::integrate(|p| closed_short_weighted(a, b, t_eff, p[0]), &region, tol)?;
        return Ok(Analytic {
            probability: clamp_probability(result.value, tol)?,
            error_estimate: result.error_estimate,
            evaluations: result.evaluations,
        });
    }
    if integral {
        let n = t.round();
        let barrier =
            BarrierSpec::linear(a, b, n).map_err(|e| FptError::Domain(e.to_string()))?;
        return integer_grid_unconditional(&barrier, tol, EvalOptions::default());
    }
    // fractional horizon above 1
    let m = t.floor() as usize;
    if 2 * m + 3 > MAX_DIMS {
        return Err(FptError::Capability(format!(
            "unconditional fractional horizon {t} needs {} axes, above the {MAX_DIMS} cap",
            2 * m + 3
        )));
    }
    let grid =
        SplitGrid { a, b, m, theta: t - t.floor(), reduced: true, unconditional: true, x: f64::NAN };
    let region = grid.region()?;
    let result = quad::integrate(|p| grid.eval(p), &region, tol)?;
    Ok(Analytic {
        probability: clamp_probability(result.value, tol)?,
        error_estimate: result.error_estimate,
        evaluations: result.evaluations,
    })
}

// ---------------------------------------------------------------------------
// routing
// ---------------------------------------------------------------------------

/// Decide the route for a request without running it.
pub fn plan(barrier: &BarrierSpec, method: Method) -> Result<RouteKind, FptError> {
    let class = barrier.classify();
    let det_route = |raw_dims: usize| RouteKind::Determinant {
        dims: raw_dims.saturating_sub(1),
        reduced: true,
    };
    match method {
        Method::MonteCarlo => Ok(RouteKind::MonteCarlo),
        Method::ClosedForm => match class {
            BarrierClass::ClosedFormShortHorizon => Ok(RouteKind::ClosedForm),
            _ => Err(FptError::Capability(
                "closed form needs a single segment with horizon at most 1".into(),
            )),
        },
        Method::Determinant => match class {
            BarrierClass::ClosedFormShortHorizon | BarrierClass::LinearRealHorizon => {
                let t = barrier.horizon();
                if (t - t.round()).abs() <= DURATION_EPS {
                    Ok(det_route(t.round() as usize))
                } else {
                    let m = t.floor() as usize;
                    if 2 * m + 2 > MAX_DIMS {
                        Err(FptError::Capability(format!(
                            "fractional horizon {t} exceeds the determinant dimension cap"
                        )))
                    } else {
                        Ok(det_route(2 * m + 2))
                    }
                }
            }
            BarrierClass::LinearIntegerHorizon
            | BarrierClass::OneChangeIntegerSegments
            | BarrierClass::TwoChangeUnitSegments => {
                let n = barrier.horizon().round() as usize;
                if n > MAX_DIMS {
                    Err(FptError::Capability(format!(
                        "integer horizon {n} exceeds the determinant dimension cap; use the Monte Carlo sampler"
                    )))
                } else {
                    Ok(det_route(n))
                }
            }
            BarrierClass::Unsupported => Err(FptError::Capability(
                "no determinant formula for this barrier shape; use the Monte Carlo sampler".into(),
            )),
        },
        Method::Auto => match class {
            BarrierClass::ClosedFormShortHorizon => Ok(RouteKind::ClosedForm),
            BarrierClass::LinearIntegerHorizon
            | BarrierClass::OneChangeIntegerSegments
            | BarrierClass::TwoChangeUnitSegments => {
                let n = barrier.horizon().round() as usize;
                if n > MAX_DIMS {
                    Ok(RouteKind::MonteCarlo)
                } else {
                    Ok(det_route(n))
                }
            }
            BarrierClass::LinearRealHorizon => {
                let m = barrier.horizon().floor() as usize;
                if 2 * m + 2 > MAX_DIMS {
                    Ok(RouteKind::MonteCarlo)
                } else {
                    Ok(det_route(2 * m + 2))
                }
            }
            BarrierClass::Unsupported => Ok(RouteKind::MonteCarlo),
        },
    }
}

/// Run an analytic route. Monte Carlo requests are planned, not run, here;
/// drive the sampler in `mc` with the planned route instead.
pub fn solve(req: &FptRequest) -> Result<FptSolution, FptError> {
    require_finite("start value", req.start_value)?;
    check_tol(req.tol)?;
    let route = plan(&req.barrier, req.method)?;
    if route == RouteKind::MonteCarlo {
        return Err(FptError::Capability(
            "route is Monte Carlo; use the path sampler".into(),
        ));
    }
    let x = req.start_value;
    let barrier = &req.barrier;
    if x >= barrier.intercept() {
        return Ok(FptSolution { probability: 0.0, route, error_estimate: 0.0, evaluations: 0 });
    }
    let class = barrier.classify();
    let (a, tol) = (barrier.intercept(), req.tol);
    let analytic = match route {
        RouteKind::ClosedForm => {
            let (b, t) = barrier.segments()[0];
            let p = survival_closed_short(a, b, t, x)?;
            Analytic { probability: p, error_estimate: 1e-14, evaluations: 1 }
        }
        RouteKind::Determinant { .. } => match class {
            BarrierClass::ClosedFormShortHorizon | BarrierClass::LinearRealHorizon => {
                let (b, t) = barrier.segments()[0];
                if (t - t.round()).abs() <= DURATION_EPS {
                    survival_linear_integer(a, b, t.round() as u32, x, tol)?
                } else {
                    survival_linear_real(a, b, t, x, tol)?
                }
            }
            BarrierClass::LinearIntegerHorizon
            | BarrierClass::OneChangeIntegerSegments
            | BarrierClass::TwoChangeUnitSegments => {
                integer_grid_survival(barrier, x, tol, EvalOptions::default())?
            }
            BarrierClass::Unsupported => unreachable!("plan rejects unsupported barriers"),
        },
        RouteKind::MonteCarlo => unreachable!(),
    };
    Ok(FptSolution {
        probability: analytic.probability,
        route,
        error_estimate: analytic.error_estimate,
        evaluations: analytic.evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(value: f64, expected: f64, tol: f64) {
        assert!(
            (value - expected).abs() <= tol,
            "value {value} differed from {expected} (tol {tol})"
        );
    }

    const F_1_0_1_0: f64 = 0.5380794162122262;

    #[test]
    fn closed_short_reference_value() {
        assert_close(survival_closed_short(1.0, 0.0, 1.0, 0.0).unwrap(), F_1_0_1_0, 1e-14);
    }

    #[test]
    fn closed_short_zero_at_barrier_start() {
        assert_eq!(survival_closed_short(1.0, 0.5, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(survival_closed_short(1.0, 0.5, 1.0, 1.7).unwrap(), 0.0);
    }

    #[test]
    fn closed_short_high_barrier_is_near_one() {
        let p = survival_closed_short(5.0, 0.0, 1.0, 0.0).unwrap();
        assert!(p >= 0.9999, "got {p}");
    }

    #[test]
    fn closed_short_domain_errors() {
        assert!(survival_closed_short(1.0, 0.0, 0.0, 0.0).is_err());
        assert!(survival_closed_short(1.0, 0.0, 1.2, 0.0).is_err());
        assert!(survival_closed_short(f64::NAN, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn linear_integer_n1_matches_closed_form() {
        let r = survival_linear_integer(1.0, 0.0, 1, 0.0, 1e-9).unwrap();
        assert_close(r.probability, F_1_0_1_0, 1e-12);
        assert_eq!(r.evaluations, 1); // fully reduced: no quadrature at all
    }

    #[test]
    fn linear_integer_rejects_above_cap_with_capability_error() {
        match survival_linear_integer(1.0, 0.0, 7, 0.0, 1e-7) {
            Err(FptError::Capability(msg)) => assert!(msg.contains("Monte Carlo")),
            other => panic!("expected capability error, got {other:?}"),
        }
    }

    #[test]
    fn linear_integer_short_circuits_on_high_start() {
        let r = survival_linear_integer(1.0, 0.0, 3, 1.5, 1e-7).unwrap();
        assert_eq!(r.probability, 0.0);
        assert_eq!(r.evaluations, 0);
    }

    #[test]
    fn linear_real_domain_checks() {
        assert!(matches!(
            survival_linear_real(1.0, 0.0, 2.0, 0.0, 1e-7),
            Err(FptError::Domain(_))
        ));
        assert!(matches!(
            survival_linear_real(1.0, 0.0, 3.5, 0.0, 1e-7),
            Err(FptError::Capability(_))
        ));
    }

    #[test]
    fn one_change_validates_durations() {
        assert!(survival_one_change(1.0, 0.0, 1.0, 0, 1, 0.0, 1e-7).is_err());
    }

    #[test]
    fn unconditional_high_barrier_tends_to_one() {
        let r = survival_unconditional(12.0, 0.0, 1.0, 1e-9).unwrap();
        assert_close(r.probability, 1.0, 1e-9);
    }

    #[test]
    fn unconditional_monotone_in_horizon() {
        let f1 = survival_unconditional(3.0, 0.0, 1.0, 1e-9).unwrap().probability;
        let f2 = survival_unconditional(3.0, 0.0, 2.0, 1e-8).unwrap().probability;
        assert!(f2 <= f1 + 2e-8, "f1={f1} f2={f2}");
    }

    #[test]
    fn unconditional_single_step_matches_survival_identity() {
        // ∫ F(1|x)φ(x)dx has the closed value Φ²(h) - φ(h)(hΦ(h) + φ(h))
        let h = 3.0f64;
        let closed = cdf(h) * cdf(h) - pdf(h) * (h * cdf(h) + pdf(h));
        let r = survival_unconditional(h, 0.0, 1.0, 1e-10).unwrap();
        assert_close(r.probability, closed, 1e-10);
    }

    #[test]
    fn plan_routes_follow_classification() {
        let closed = BarrierSpec::linear(1.0, 0.0, 0.7).unwrap();
        assert_eq!(plan(&closed, Method::Auto).unwrap(), RouteKind::ClosedForm);
        let n3 = BarrierSpec::linear(1.0, 0.0, 3.0).unwrap();
        assert_eq!(
            plan(&n3, Method::Auto).unwrap(),
            RouteKind::Determinant { dims: 2, reduced: true }
        );
        let big = BarrierSpec::linear(1.0, 0.0, 9.0).unwrap();
        assert_eq!(plan(&big, Method::Auto).unwrap(), RouteKind::MonteCarlo);
        let odd = BarrierSpec::new(1.0, vec![(0.5, 0.4), (0.2, 0.8)]).unwrap();
        assert_eq!(plan(&odd, Method::Auto).unwrap(), RouteKind::MonteCarlo);
        assert!(matches!(plan(&odd, Method::Determinant), Err(FptError::Capability(_))));
        assert!(matches!(plan(&n3, Method::ClosedForm), Err(FptError::Capability(_))));
    }

    #[test]
    fn quadrature_failures_map_to_accuracy_errors() {
        let not_met = QuadError::ToleranceNotMet {
            best: crate::quad::QuadResult { value: 0.5, error_estimate: 1e-3, evaluations: 7 },
        };
        assert!(matches!(FptError::from(not_met), FptError::Accuracy(_)));
        assert!(matches!(FptError::from(QuadError::TooManyDims(9)), FptError::Capability(_)));
    }

    #[test]
    fn solve_reports_route_and_value() {
        let req = FptRequest {
            barrier: BarrierSpec::linear(1.0, 0.0, 1.0).unwrap(),
            start_value: 0.0,
            method: Method::Auto,
            tol: 1e-8,
        };
        let sol = solve(&req).unwrap();
        assert_eq!(sol.route, RouteKind::ClosedForm);
        assert_close(sol.probability, F_1_0_1_0, 1e-12);
    }
}
