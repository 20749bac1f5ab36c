//! First-passage probabilities for the Slepian process
//! `S(t) = W(t) - W(t+1)` across linear and piecewise-linear barriers.
//!
//! The survival probability
//! `F(T|x) = Pr(S(t) < B(t) for all t in [0,T] | S(0) = x)` is computed by
//! exact determinant-integral formulas: the ordered-path event over each
//! unit interval becomes a determinant of Brownian transition densities with
//! a drift prefactor, and the remaining finite-dimensional integral is done
//! by deterministic adaptive quadrature. Closed forms cover horizons up to
//! one; a seeded Monte Carlo sampler provides an independent check and a
//! fallback for barrier shapes without a formula.
//!
//! On top of the probability layer, [`changepoint`] calibrates alarm
//! thresholds of a moving-sum detector through run-length approximations
//! and evaluates its detection power against epidemic drift alternatives.

mod erf;

pub mod barrier;
pub mod changepoint;
pub mod fpt;
pub mod gaussian;
pub mod km;
pub mod mc;
pub mod quad;
pub mod validation;

pub use barrier::{BarrierClass, BarrierError, BarrierSpec};
pub use fpt::{Analytic, FptError, FptRequest, FptSolution, Method, RouteKind};
pub use mc::{McEstimate, PathConfig, StartMode};
pub use quad::{QuadError, QuadResult};
