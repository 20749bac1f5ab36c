//! Change-point detection layer: average run length of the moving-sum
//! stopping rule, threshold calibration, and the detection-power
//! approximations built from first-passage probabilities of the Slepian
//! process against the epidemic barrier shapes.

use crate::fpt::{
    self, survival_one_change_opts, survival_two_change, survival_unconditional, EvalOptions,
    FptError,
};
use crate::gaussian::{cdf, pdf, LN_SQRT_2PI};
use crate::km;
use crate::quad::{self, Axis, LowerBound, Region, UpperBound};
use thiserror::Error;

/// Parameters of one detection setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    /// Alarm threshold of the moving-sum statistic.
    pub threshold: f64,
    /// Epidemic drift magnitude.
    pub drift: f64,
    /// Average run length the threshold was calibrated for.
    pub target_arl: f64,
}

#[derive(Debug, Clone, Error)]
pub enum ChangepointError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Fpt(#[from] FptError),
}

/// Threshold below which the run-length approximation loses its validated
/// accuracy; callers should surface a warning rather than refuse.
pub const ARL_VALIDATED_THRESHOLD: f64 = 3.0;

/// Geometric decay rate `λ(h)` of the survival probability per unit time:
/// the ratio of the unconditional survivals over two units and one unit.
pub fn lambda_h(h: f64, tol: f64) -> Result<f64, ChangepointError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(ChangepointError::Domain(format!("threshold must be positive, got {h}")));
    }
    let f2 = survival_unconditional(h, 0.0, 2.0, tol)?.probability;
    let f1 = survival_unconditional(h, 0.0, 1.0, tol)?.probability;
    if f1 <= 0.0 {
        return Err(ChangepointError::Domain(format!("degenerate survival at h={h}")));
    }
    let lambda = f2 / f1;
    if !(0.0 < lambda && lambda < 1.0) {
        return Err(ChangepointError::Fpt(FptError::Accuracy(format!(
            "decay rate {lambda} outside (0,1)"
        ))));
    }
    Ok(lambda)
}

/// Expected run length to a false alarm at threshold `h`:
/// `-F(2) / (λ(h)² ln λ(h))` under the geometric-tail survival model.
pub fn arl(h: f64, tol: f64) -> Result<f64, ChangepointError> {
    let f2 = survival_unconditional(h, 0.0, 2.0, tol)?.probability;
    let lambda = lambda_h(h, tol)?;
    let log_lambda = lambda.ln();
    if log_lambda >= 0.0 {
        return Err(ChangepointError::Fpt(FptError::Accuracy(
            "decay rate reached 1; run length diverges numerically".into(),
        )));
    }
    Ok(-f2 / (lambda * lambda * log_lambda))
}

/// Threshold whose average run length equals `target`, solved by bisection
/// over h in [2.5, 6] to 0.1% relative accuracy in the run length.
pub fn threshold_for_arl(target: f64, tol: f64) -> Result<f64, ChangepointError> {
    if !(target.is_finite() && target >= 20.0) {
        return Err(ChangepointError::Domain(format!(
            "target run length must be at least 20, got {target}"
        )));
    }
    let (mut lo, mut hi) = (2.5f64, 6.0f64);
    let f_lo = arl(lo, tol)?;
    let f_hi = arl(hi, tol)?;
    if !(f_lo < target && target < f_hi) {
        return Err(ChangepointError::Domain(format!(
            "target {target} outside the bracket [{f_lo:.1}, {f_hi:.1}] spanned by h in [2.5, 6]"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let val = arl(mid, tol)?;
        if (val - target).abs() / target <= 1e-3 {
            return Ok(mid);
        }
        if val < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-7 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn check_power_inputs(h: f64, mu: f64) -> Result<(), ChangepointError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(ChangepointError::Domain(format!("threshold must be positive, got {h}")));
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(ChangepointError::Domain(format!("drift must be positive, got {mu}")));
    }
    Ok(())
}

/// Denominator shared by the conditioned power ratios: survival across the
/// flat barrier at unit horizon given the start value.
fn flat_unit_survival(h: f64, x: f64) -> Result<f64, ChangepointError> {
    let den = fpt::survival_closed_short(h, 0.0, 1.0, x)?;
    if den < 1e-12 {
        return Err(ChangepointError::Fpt(FptError::Accuracy(format!(
            "conditioning survival {den} too small at x={x}"
        ))));
    }
    Ok(den)
}

/// Detection power approximation: probability that the statistic clears the
/// epidemic barrier within the alarm window, conditioned on surviving the
/// flat stretch. Two-dimensional reduced integral.
pub fn power_gamma(x: f64, h: f64, mu: f64, tol: f64) -> Result<f64, ChangepointError> {
    check_power_inputs(h, mu)?;
    if x >= h {
        return Err(ChangepointError::Domain(format!("start value {x} must be below {h}")));
    }
    let den = flat_unit_survival(h, x)?;
    let num = survival_two_change(h, 0.0, -mu, mu, x, tol)?;
    Ok(1.0 - num.probability / den)
}

/// Simplified power: unconditioned crossing of the vee barrier (down-slope
/// then up-slope over two units). One-dimensional reduced integral.
pub fn power_gamma1(x: f64, h: f64, mu: f64, tol: f64) -> Result<f64, ChangepointError> {
    check_power_inputs(h, mu)?;
    let surv = survival_one_change_opts(h, -mu, mu, 1, 1, x, tol, EvalOptions::default())?;
    Ok(1.0 - surv.probability)
}

/// Start-value density of the statistic under the no-change regime,
/// conditioned on no prior alarm at threshold `h`.
pub fn stationary_density(x: f64, h: f64) -> Result<f64, ChangepointError> {
    if !(h.is_finite() && x.is_finite()) {
        return Err(ChangepointError::Domain("non-finite input".into()));
    }
    if x > h {
        return Err(ChangepointError::Domain(format!("density support is x <= {h}, got {x}")));
    }
    let d = stationary_normalizer(h);
    Ok((cdf(h) * pdf(x) - cdf(x) * pdf(h)) / d)
}

/// Closed-form normalizer of the stationary start density: also the
/// unconditional unit-horizon survival.
fn stationary_normalizer(h: f64) -> f64 {
    cdf(h) * cdf(h) - pdf(h) * (h * cdf(h) + pdf(h))
}

/// Power averaged over the stationary start density, fused into one
/// two-dimensional quadrature (the vee-barrier inner axis plus the start
/// value).
pub fn power_gamma2(h: f64, mu: f64, tol: f64) -> Result<f64, ChangepointError> {
    check_power_inputs(h, mu)?;
    // survival across the vee barrier averaged over p(x):
    //   ∫ F(x)·p(x) dx  with F's own integrand fused in, then γ₂ = 1 - that.
    let normalizer = stationary_normalizer(h);
    let slopes = [-mu, mu];
    let bvals = [h, h - mu, h];
    let x_cut = quad::truncation_bounds(1.0, (tol * 1e-2).max(1e-300));
    let region = Region::new(vec![
        Axis::with_hint(LowerBound::Constant(-x_cut), UpperBound::Constant(h), 0.0, 1.0),
        Axis::with_hint(LowerBound::MinusInfinity, UpperBound::Constant(bvals[1]), 0.0, 1.0),
    ])
    .map_err(FptError::from)?;
    let integrand = |p: &[f64]| {
        let (x, s1) = (p[0], p[1]);
        // weight p(x)/φ(x) folded into the exponential in log space
        let weight = cdf(h) * pdf(x) - cdf(x) * pdf(h);
        if weight <= 0.0 {
            return 0.0;
        }
        let extra = 0.5 * x * x + LN_SQRT_2PI + weight.ln();
        let x2 = -x - s1;
        let x3 = x2 - bvals[2]; // pinned to its lower limit for the Φ column
        let block = km::block_from_unit_slopes(h, &slopes, x, &[x2, x3])
            .expect("fixed two-segment grid");
        km::km_signed_log_reduced(&block, extra).value()
    };
    let avg_survival = quad::integrate(integrand, &region, tol).map_err(FptError::from)?;
    let g2 = 1.0 - avg_survival.value / normalizer;
    if !(-10.0 * tol..=1.0 + 10.0 * tol).contains(&g2) {
        return Err(ChangepointError::Fpt(FptError::Accuracy(format!(
            "averaged power {g2} outside [0,1]"
        ))));
    }
    Ok(g2.clamp(0.0, 1.0))
}

/// Power without the final rising segment: crossing of the flat-then-down
/// barrier over two units, conditioned like `power_gamma`.
pub fn power_gamma3(x: f64, h: f64, mu: f64, tol: f64) -> Result<f64, ChangepointError> {
    check_power_inputs(h, mu)?;
    if x >= h {
        return Err(ChangepointError::Domain(format!("start value {x} must be below {h}")));
    }
    let den = flat_unit_survival(h, x)?;
    let num = survival_one_change_opts(h, 0.0, -mu, 1, 1, x, tol, EvalOptions::default())?;
    Ok(1.0 - num.probability / den)
}

// ---------------------------------------------------------------------------
// table generation
// ---------------------------------------------------------------------------

/// Threshold grid shared by the shipped tables, paired with the run lengths
/// each threshold was calibrated for.
pub const TABLE_THRESHOLDS: [(f64, f64); 3] = [(3.11, 100.0), (3.63, 500.0), (3.83, 1000.0)];

/// Drift grid of the full-power table.
pub const MU_FINE: [f64; 13] =
    [2.0, 2.25, 2.5, 2.75, 3.0, 3.25, 3.5, 3.75, 4.0, 4.25, 4.5, 4.75, 5.0];

/// Drift grid of the condensed tables.
pub const MU_COARSE: [f64; 7] = [2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0];

/// Which power approximation a table reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerTable {
    /// γ(0,h,μ): full epidemic barrier, conditioned.
    Gamma,
    /// γ₁(0,h,μ): vee barrier only.
    Gamma1,
    /// γ₂(h,μ): vee barrier averaged over the stationary start density.
    Gamma2,
    /// γ₃(0,h,μ): epidemic barrier without the final rise, conditioned.
    Gamma3,
}

impl PowerTable {
    pub fn from_index(which: u8) -> Option<Self> {
        match which {
            1 => Some(PowerTable::Gamma),
            2 => Some(PowerTable::Gamma1),
            3 => Some(PowerTable::Gamma2),
            4 => Some(PowerTable::Gamma3),
            _ => None,
        }
    }

    pub fn mu_grid(&self) -> &'static [f64] {
        match self {
            PowerTable::Gamma => &MU_FINE,
            _ => &MU_COARSE,
        }
    }
}

/// One computed table cell.
#[derive(Debug, Clone, Copy)]
pub struct TableCell {
    pub h: f64,
    pub target_arl: f64,
    pub mu: f64,
    pub value: f64,
}

/// Compute one power table over its (h, μ) grid. Cells are independent and
/// evaluated in parallel; the output order is fixed by the grid.
pub fn power_table(which: PowerTable, tol: f64) -> Result<Vec<TableCell>, ChangepointError> {
    use rayon::prelude::*;
    let grid: Vec<(f64, f64, f64)> = TABLE_THRESHOLDS
        .iter()
        .flat_map(|&(h, c)| which.mu_grid().iter().map(move |&mu| (h, c, mu)))
        .collect();
    grid.par_iter()
        .map(|&(h, c, mu)| {
            let value = match which {
                PowerTable::Gamma => power_gamma(0.0, h, mu, tol)?,
                PowerTable::Gamma1 => power_gamma1(0.0, h, mu, tol)?,
                PowerTable::Gamma2 => power_gamma2(h, mu, tol)?,
                PowerTable::Gamma3 => power_gamma3(0.0, h, mu, tol)?,
            };
            Ok(TableCell { h, target_arl: c, mu, value })
        })
        .collect()
}

/// Frozen regression references for the shipped table grids, used by the
/// validation suite and the acceptance tests.
pub mod reference {
    /// μ from 2.0 to 5.0 in steps of 0.25; h = 3.11, 3.63, 3.83.
    pub const GAMMA: [[f64; 13]; 3] = [
        [
            0.3052, 0.3876, 0.4765, 0.5676, 0.6559, 0.7371, 0.8075, 0.8653, 0.9101, 0.9429,
            0.9655, 0.9802, 0.9892,
        ],
        [
            0.1384, 0.1946, 0.2638, 0.3445, 0.4338, 0.5272, 0.6197, 0.7061, 0.7824, 0.8461,
            0.8961, 0.9332, 0.9592,
        ],
        [
            0.0956, 0.1402, 0.1979, 0.2687, 0.3510, 0.4416, 0.5358, 0.6285, 0.7146, 0.7900,
            0.8525, 0.9011, 0.9370,
        ],
    ];

    /// μ from 2.0 to 5.0 in steps of 0.5; same thresholds.
    pub const GAMMA1: [[f64; 7]; 3] = [
        [0.2918, 0.4645, 0.6471, 0.8021, 0.9075, 0.9644, 0.9889],
        [0.1310, 0.2553, 0.4256, 0.6132, 0.7783, 0.8940, 0.9583],
        [0.0903, 0.1911, 0.3438, 0.5295, 0.7101, 0.8499, 0.9358],
    ];

    pub const GAMMA2: [[f64; 7]; 3] = [
        [0.3047, 0.4760, 0.6555, 0.8073, 0.9100, 0.9654, 0.9892],
        [0.1383, 0.2637, 0.4337, 0.6196, 0.7824, 0.8961, 0.9592],
        [0.0956, 0.1978, 0.3509, 0.5358, 0.7146, 0.8524, 0.9370],
    ];

    pub const GAMMA3: [[f64; 7]; 3] = [
        [0.2389, 0.4017, 0.5873, 0.7567, 0.8801, 0.9514, 0.9840],
        [0.1039, 0.2131, 0.3731, 0.5611, 0.7373, 0.8685, 0.9458],
        [0.0708, 0.1575, 0.2974, 0.4785, 0.6657, 0.8194, 0.9192],
    ];

    pub fn table(which: super::PowerTable) -> Vec<Vec<f64>> {
        match which {
            super::PowerTable::Gamma => GAMMA.iter().map(|r| r.to_vec()).collect(),
            super::PowerTable::Gamma1 => GAMMA1.iter().map(|r| r.to_vec()).collect(),
            super::PowerTable::Gamma2 => GAMMA2.iter().map(|r| r.to_vec()).collect(),
            super::PowerTable::Gamma3 => GAMMA3.iter().map(|r| r.to_vec()).collect(),
        }
    }
}
