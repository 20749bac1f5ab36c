//! Scalar Gaussian primitives: density, distribution function and the
//! Brownian transition density. Every integrand in this crate is assembled
//! from these three functions, so they are kept total on finite inputs and
//! accurate in relative terms deep into the tails.

use crate::erf::erfc;
use thiserror::Error;

pub(crate) const SQRT_2PI: f64 = 2.506628274631000502415765284811;
pub(crate) const LN_SQRT_2PI: f64 = 0.918938533204672741780329736406;
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaussianError {
    #[error("argument must be finite, got {0}")]
    NonFinite(f64),
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
}

/// Standard normal density `(2π)^(-1/2) exp(-z²/2)`.
///
/// Underflows silently to 0 for |z| beyond ~38.6.
pub fn normal_pdf(z: f64) -> Result<f64, GaussianError> {
    if !z.is_finite() {
        return Err(GaussianError::NonFinite(z));
    }
    Ok(pdf(z))
}

/// Standard normal distribution function. Accepts ±infinity; rejects NaN.
///
/// Evaluated through the complementary error function so that the tail
/// values keep full relative accuracy (needed by the ratio quantities in
/// the change-point layer).
pub fn normal_cdf(z: f64) -> Result<f64, GaussianError> {
    if z.is_nan() {
        return Err(GaussianError::NonFinite(z));
    }
    Ok(cdf(z))
}

/// Brownian transition density `(2πs)^(-1/2) exp(-z²/(2s))` for step `s > 0`.
pub fn transition_density(s: f64, z: f64) -> Result<f64, GaussianError> {
    if !(s.is_finite() && s > 0.0) {
        return Err(GaussianError::InvalidStep(s));
    }
    if !z.is_finite() {
        return Err(GaussianError::NonFinite(z));
    }
    Ok(pdf_s(s, z))
}

#[inline]
pub(crate) fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

#[inline]
pub(crate) fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

#[inline]
pub(crate) fn pdf_s(s: f64, z: f64) -> f64 {
    (-z * z / (2.0 * s)).exp() / (SQRT_2PI * s.sqrt())
}

/// log of the transition density; never under- or overflows for finite input.
#[inline]
pub(crate) fn ln_pdf_s(s: f64, z: f64) -> f64 {
    -z * z / (2.0 * s) - LN_SQRT_2PI - 0.5 * s.ln()
}

/// log Φ(z), with an asymptotic expansion once erfc underflows (z < -37).
pub(crate) fn ln_cdf(z: f64) -> f64 {
    if z >= 8.0 {
        // Φ(z) ~ 1: log1p keeps accuracy
        return (-0.5 * erfc(z * FRAC_1_SQRT_2)).ln_1p();
    }
    if z > -37.0 {
        return (0.5 * erfc(-z * FRAC_1_SQRT_2)).ln();
    }
    // Mills-ratio expansion: Φ(z) = φ(z)/|z| (1 - 1/z² + 3/z⁴ - 15/z⁶ + ...)
    let iz2 = 1.0 / (z * z);
    let series = 1.0 - iz2 * (1.0 - 3.0 * iz2 * (1.0 - 5.0 * iz2));
    -0.5 * z * z - LN_SQRT_2PI - (-z).ln() + series.ln()
}
