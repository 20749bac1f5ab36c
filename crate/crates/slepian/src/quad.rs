//! Deterministic multidimensional integration over the semi-infinite,
//! chain-constrained regions produced by the determinant formulas.
//!
//! Each axis is handled one of three ways: finite intervals are integrated
//! directly, semi-infinite axes are mapped onto (0,1) with the rational
//! transform `z = edge ± t/(1-t)`, and doubly-infinite axes are split at a
//! caller-provided center into two semi-infinite halves. Every 1-D pass is
//! globally adaptive Gauss-Kronrod 7-15. The whole engine is single-threaded
//! and sequential, so results are exactly reproducible for a given
//! `(integrand, region, tol)`.

use crate::gaussian::ln_cdf;
use thiserror::Error;

/// Hard cap on the number of integration axes.
pub const MAX_DIMS: usize = 6;

/// Leaf-evaluation budget for one `integrate` call. Four integration axes
/// fit comfortably; five need either this much headroom or a loosened
/// tolerance.
const EVAL_BUDGET: u64 = 150_000_000;

/// Maximum number of adaptive segments per 1-D pass.
const MAX_SEGMENTS: usize = 120;

/// Lower limit of one axis.
#[derive(Debug, Clone)]
pub enum LowerBound {
    MinusInfinity,
    Constant(f64),
    /// `offset + Σ coef·value(axis)`, referencing axes integrated further out.
    Chain { offset: f64, terms: Vec<(usize, f64)> },
}

/// Upper limit of one axis.
#[derive(Debug, Clone, Copy)]
pub enum UpperBound {
    PlusInfinity,
    Constant(f64),
}

/// A Gaussian envelope of the integrand's mass along one axis: the marginal
/// is guaranteed not to exceed a normal density with this center and scale.
#[derive(Debug, Clone, Copy)]
pub struct MassHint {
    pub center: f64,
    pub scale: f64,
}

/// One integration axis. A [`MassHint`] lets the engine truncate infinite
/// ends at a provable tail bound instead of transforming them, which keeps
/// sharply localized integrands resolvable; without a hint, infinite ends
/// are mapped onto (0,1) rationally and doubly-infinite axes split at
/// `split_center`.
#[derive(Debug, Clone)]
pub struct Axis {
    pub lower: LowerBound,
    pub upper: UpperBound,
    pub split_center: f64,
    pub hint: Option<MassHint>,
}

impl Axis {
    pub fn new(lower: LowerBound, upper: UpperBound) -> Self {
        Self { lower, upper, split_center: 0.0, hint: None }
    }

    pub fn with_center(lower: LowerBound, upper: UpperBound, split_center: f64) -> Self {
        Self { lower, upper, split_center, hint: None }
    }

    pub fn with_hint(lower: LowerBound, upper: UpperBound, center: f64, scale: f64) -> Self {
        Self { lower, upper, split_center: center, hint: Some(MassHint { center, scale }) }
    }
}

/// An axis-aligned integration domain; chain lower limits may reference
/// previously integrated (outer) axes only.
#[derive(Debug, Clone)]
pub struct Region {
    axes: Vec<Axis>,
}

impl Region {
    pub fn new(axes: Vec<Axis>) -> Result<Self, QuadError> {
        if axes.is_empty() {
            return Err(QuadError::InvalidRegion("region needs at least one axis".into()));
        }
        if axes.len() > MAX_DIMS {
            return Err(QuadError::TooManyDims(axes.len()));
        }
        for (k, axis) in axes.iter().enumerate() {
            if let LowerBound::Chain { terms, .. } = &axis.lower {
                if terms.iter().any(|&(j, _)| j >= k) {
                    return Err(QuadError::InvalidRegion(format!(
                        "chain lower bound on axis {k} references a non-outer axis"
                    )));
                }
            }
        }
        Ok(Self { axes })
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }
}

/// Result of a quadrature run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: u64,
}

#[derive(Debug, Clone, Error)]
pub enum QuadError {
    #[error("tolerance not met: best value {} ± {}", best.value, best.error_estimate)]
    ToleranceNotMet { best: QuadResult },
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("tolerance {0} below the supported minimum 1e-12")]
    InvalidTolerance(f64),
    #[error("region has {0} axes, the engine supports at most {MAX_DIMS}")]
    TooManyDims(usize),
}

// 15-point Kronrod nodes (positive half) with embedded 7-point Gauss rule.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One Gauss-Kronrod 7-15 application on [a, b].
/// Returns (kronrod value, error estimate, resabs).
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let fc = f(center);
    let mut result_kronrod = fc * WGK[7];
    let mut result_gauss = fc * WG[3];
    let mut resabs = fc.abs() * WGK[7];

    let mut fsum_at = [0.0f64; 8];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fsum_at[j] = f1 + f2;
        result_kronrod += WGK[j] * fsum_at[j];
        resabs += WGK[j] * (f1.abs() + f2.abs());
    }
    for (i, j) in [1usize, 3, 5].iter().enumerate() {
        result_gauss += WG[i] * fsum_at[*j];
    }

    let result_kronrod = result_kronrod * half;
    let result_gauss = result_gauss * half;
    let resabs = resabs * half.abs();

    // QUADPACK-style rescaled error
    let mut err = (result_kronrod - result_gauss).abs();
    if resabs != 0.0 && err != 0.0 {
        let scale = (200.0 * err / resabs).powf(1.5);
        if scale < 1.0 {
            err = resabs * scale;
        } else {
            err = resabs.min(err.max(resabs * 1e-14));
        }
    }
    let min_err = 50.0 * f64::EPSILON * resabs;
    if min_err > err {
        err = min_err;
    }
    (result_kronrod, err, resabs)
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

/// Globally adaptive 1-D integration of `f` over [a, b], refined until the
/// error drops below `max(abs_tol, rel_tol · |value|)`.
/// Returns (value, error estimate, converged).
fn adaptive_1d<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> (f64, f64, bool) {
    if a >= b {
        return (0.0, 0.0, true);
    }
    let (v, e, _) = gk15(f, a, b);
    let mut segments = vec![Segment { a, b, value: v, err: e }];
    let target = |value: f64| abs_tol.max(rel_tol * value.abs());
    loop {
        let total_err: f64 = segments.iter().map(|s| s.err).sum();
        let total_val: f64 = segments.iter().map(|s| s.value).sum();
        if total_err <= target(total_val) {
            break;
        }
        if segments.len() >= MAX_SEGMENTS {
            break;
        }
        // deterministic worst-segment selection: max error, lowest index on ties
        let mut worst = 0;
        for (i, s) in segments.iter().enumerate() {
            if s.err > segments[worst].err {
                worst = i;
            }
        }
        let Segment { a: sa, b: sb, .. } = segments[worst];
        let mid = 0.5 * (sa + sb);
        if mid <= sa || mid >= sb {
            break; // interval exhausted at f64 resolution
        }
        let (v1, e1, _) = gk15(f, sa, mid);
        let (v2, e2, _) = gk15(f, mid, sb);
        segments[worst] = Segment { a: sa, b: mid, value: v1, err: e1 };
        segments.push(Segment { a: mid, b: sb, value: v2, err: e2 });
    }
    // accumulate in position order, not discovery order
    segments.sort_by(|p, q| p.a.partial_cmp(&q.a).unwrap());
    let value: f64 = segments.iter().map(|s| s.value).sum();
    let err: f64 = segments.iter().map(|s| s.err).sum();
    (value, err, err <= target(value))
}

/// Integrate `g` over one axis whose bounds may be infinite, mapping any
/// infinite end through `z = edge ± t/(1-t)`.
fn integrate_axis<G: FnMut(f64) -> f64>(
    g: &mut G,
    lo: Option<f64>,
    hi: Option<f64>,
    split_center: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> (f64, f64, bool) {
    match (lo, hi) {
        (Some(a), Some(b)) => adaptive_1d(g, a, b, abs_tol, rel_tol),
        (Some(a), None) => {
            // z = a + t/(1-t), dz = dt/(1-t)^2
            let mut h = |t: f64| {
                let om = 1.0 - t;
                let z = a + t / om;
                let v = g(z);
                if v == 0.0 { 0.0 } else { v / (om * om) }
            };
            adaptive_1d(&mut h, 0.0, 1.0, abs_tol, rel_tol)
        }
        (None, Some(b)) => {
            let mut h = |t: f64| {
                let om = 1.0 - t;
                let z = b - t / om;
                let v = g(z);
                if v == 0.0 { 0.0 } else { v / (om * om) }
            };
            adaptive_1d(&mut h, 0.0, 1.0, abs_tol, rel_tol)
        }
        (None, None) => {
            let c = split_center;
            let half_tol = 0.5 * abs_tol;
            let (v1, e1, c1) = {
                let mut h = |t: f64| {
                    let om = 1.0 - t;
                    let v = g(c + t / om);
                    if v == 0.0 { 0.0 } else { v / (om * om) }
                };
                adaptive_1d(&mut h, 0.0, 1.0, half_tol, rel_tol)
            };
            let (v2, e2, c2) = {
                let mut h = |t: f64| {
                    let om = 1.0 - t;
                    let v = g(c - t / om);
                    if v == 0.0 { 0.0 } else { v / (om * om) }
                };
                adaptive_1d(&mut h, 0.0, 1.0, half_tol, rel_tol)
            };
            (v1 + v2, e1 + e2, c1 && c2)
        }
    }
}

fn resolve_lower(lower: &LowerBound, point: &[f64]) -> Option<f64> {
    match lower {
        LowerBound::MinusInfinity => None,
        LowerBound::Constant(c) => Some(*c),
        LowerBound::Chain { offset, terms } => {
            let mut v = *offset;
            for &(j, coef) in terms {
                v += coef * point[j];
            }
            Some(v)
        }
    }
}

/// Tolerance schedule: the outer level gets an absolute budget; inner levels
/// refine relative to their own local value (tail regions then converge in a
/// single pass) down to a depth-scaled absolute floor.
struct Tolerances {
    outer_abs: f64,
    inner_rel: f64,
    floors: Vec<f64>,
    hint_halfwidths: Vec<f64>,
}

fn nested_level(
    f: &dyn Fn(&[f64]) -> f64,
    region: &Region,
    tols: &Tolerances,
    point: &mut [f64],
    evals: &mut u64,
    inner_ok: &mut bool,
    k: usize,
) -> (f64, f64, bool) {
    if *evals > EVAL_BUDGET {
        *inner_ok = false;
        return (0.0, f64::INFINITY, false);
    }
    let dims = region.dims();
    let mut lo = resolve_lower(&region.axes[k].lower, &point[..k]);
    let mut hi = match region.axes[k].upper {
        UpperBound::PlusInfinity => None,
        UpperBound::Constant(c) => Some(c),
    };
    if let Some(hint) = region.axes[k].hint {
        // clip at the envelope's tail bound: everything outside carries less
        // mass than the truncation tolerance
        let cut = tols.hint_halfwidths[k];
        let (h_lo, h_hi) = (hint.center - cut, hint.center + cut);
        lo = Some(lo.map_or(h_lo, |v| v.max(h_lo)));
        hi = Some(hi.map_or(h_hi, |v| v.min(h_hi)));
    }
    let split_center = region.axes[k].split_center;
    let (abs_tol, rel_tol) = if k == 0 {
        (tols.outer_abs, 0.0)
    } else {
        (tols.floors[k], tols.inner_rel)
    };
    if k + 1 == dims {
        let mut g = |z: f64| {
            point[k] = z;
            *evals += 1;
            f(point)
        };
        integrate_axis(&mut g, lo, hi, split_center, abs_tol, rel_tol)
    } else {
        let mut g = |z: f64| {
            point[k] = z;
            let (v, _e, conv) = nested_level(f, region, tols, point, evals, inner_ok, k + 1);
            if !conv {
                *inner_ok = false;
            }
            v
        };
        integrate_axis(&mut g, lo, hi, split_center, abs_tol, rel_tol)
    }
}

/// Integrate `f` over `region` aiming for absolute accuracy `tol`.
///
/// On success `error_estimate <= tol`; budget exhaustion or an unreachable
/// tolerance yields [`QuadError::ToleranceNotMet`] carrying the best estimate.
pub fn integrate<F>(f: F, region: &Region, tol: f64) -> Result<QuadResult, QuadError>
where
    F: Fn(&[f64]) -> f64,
{
    if !(tol.is_finite() && tol >= 1e-12) {
        return Err(QuadError::InvalidTolerance(tol));
    }
    let dims = region.dims();
    let trunc_tol = (tol * 1e-4 / dims as f64).max(1e-300);
    let tols = Tolerances {
        outer_abs: 0.4 * tol,
        inner_rel: 0.08 * tol,
        // each level-k floor spreads over a k-fold outer measure of width
        // ~25 per axis, so it shrinks by that factor with depth
        floors: (0..dims).map(|k| 0.08 * tol / 25f64.powi(k as i32 - 1)).collect(),
        hint_halfwidths: region
            .axes
            .iter()
            .map(|ax| ax.hint.map_or(0.0, |h| truncation_bounds(h.scale, trunc_tol)))
            .collect(),
    };
    let mut point = vec![0.0; dims];
    let mut evals = 0u64;
    let mut inner_ok = true;
    let (value, err0, converged0) =
        nested_level(&f, region, &tols, &mut point, &mut evals, &mut inner_ok, 0);
    // inner relative refinement contributes ~inner_rel·|value| per level and
    // each floor ~0.08·tol after integrating over its outer measure
    let inner_allowance = if dims > 1 {
        (dims - 1) as f64 * (tols.inner_rel * value.abs() + 0.08 * tol)
    } else {
        0.0
    };
    let error_estimate = if inner_ok { err0 + inner_allowance } else { f64::INFINITY };
    let result = QuadResult { value, error_estimate, evaluations: evals.max(1) };
    if converged0 && inner_ok && error_estimate <= tol {
        Ok(result)
    } else {
        Err(QuadError::ToleranceNotMet { best: result })
    }
}

/// Half-width L·`axis_scale` such that the Gaussian tail mass beyond it is
/// below `tol`, never less than 10 standard deviations.
pub fn truncation_bounds(axis_scale: f64, tol: f64) -> f64 {
    let tol = tol.clamp(1e-300, 0.5);
    // smallest z with Φ(-z) <= tol, found by bisection on ln Φ
    let target = tol.ln();
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ln_cdf(-mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    axis_scale * hi.max(10.0)
}
