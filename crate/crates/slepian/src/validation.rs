//! Built-in validation suites: cross-route seam agreement, reproduction of
//! the shipped power tables, and Monte Carlo versus analytic values across
//! every analytic route. Shared by the command-line `validate` command and
//! the acceptance tests.

use crate::barrier::BarrierSpec;
use crate::changepoint::{self, PowerTable};
use crate::fpt::{
    survival_closed_short, survival_linear_integer, survival_linear_real, survival_one_change,
    survival_two_change, survival_unconditional, FptError,
};
use crate::mc::{bias_bound, simulate_survival, McError, PathConfig, StartMode};
use thiserror::Error;

/// One validation check: passes when `gap <= limit`.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    /// Observed discrepancy.
    pub gap: f64,
    /// Largest acceptable discrepancy.
    pub limit: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.gap <= self.limit
    }
}

#[derive(Debug, Clone, Error)]
pub enum ValidationError {
    #[error(transparent)]
    Fpt(#[from] FptError),
    #[error(transparent)]
    Changepoint(#[from] changepoint::ChangepointError),
    #[error(transparent)]
    Mc(#[from] McError),
}

/// Seam agreements between neighbouring analytic routes.
pub fn seam_suite(tol: f64) -> Result<Vec<Check>, ValidationError> {
    let mut checks = Vec::new();

    // unit horizon: determinant route against the closed form, 25 triples
    let a_grid = [0.5, 1.0, 1.5, 2.5, 3.5];
    let b_grid = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let offsets = [0.5, 1.0, 1.5, 2.0, 3.0];
    let mut worst: f64 = 0.0;
    for (i, &a) in a_grid.iter().enumerate() {
        for (j, &b) in b_grid.iter().enumerate() {
            let x = a - offsets[(i + j) % offsets.len()];
            let closed = survival_closed_short(a, b, 1.0, x)?;
            let det = survival_linear_integer(a, b, 1, x, tol)?.probability;
            worst = worst.max((closed - det).abs());
        }
    }
    checks.push(Check {
        name: "unit horizon: determinant vs closed form (25 triples)".into(),
        gap: worst,
        limit: 1e-6,
    });

    // half horizon: split route against the closed form
    let mut worst: f64 = 0.0;
    for &(a, b, x) in &[(1.0, 0.0, 0.0), (1.5, 0.5, 0.2), (2.0, -0.3, -1.0), (3.0, 0.0, 0.0)] {
        let closed = survival_closed_short(a, b, 0.5, x)?;
        let split = survival_linear_real(a, b, 0.5, x, tol)?.probability;
        worst = worst.max((closed - split).abs());
    }
    checks.push(Check {
        name: "half horizon: split vs closed form".into(),
        gap: worst,
        limit: 1e-6,
    });

    // equal slopes: one-change collapses onto the linear route
    let mut worst: f64 = 0.0;
    for &(a, b, x) in &[(1.0, 0.25, 0.0), (2.0, -0.4, -0.5), (3.0, 0.0, 1.0)] {
        let lin = survival_linear_integer(a, b, 2, x, tol)?.probability;
        let oc = survival_one_change(a, b, b, 1, 1, x, tol)?.probability;
        worst = worst.max((lin - oc).abs());
    }
    checks.push(Check {
        name: "equal slopes: one-change vs linear".into(),
        gap: worst,
        limit: 2e-6,
    });

    // equal tail slopes: two-change collapses onto one-change
    let mut worst: f64 = 0.0;
    for &(a, b, b2, x) in &[(1.0, 0.25, -0.5, 0.0), (3.0, 0.0, -2.0, 0.0), (2.0, -0.3, 0.4, -0.5)]
    {
        let oc = survival_one_change(a, b, b2, 1, 2, x, tol)?.probability;
        let tc = survival_two_change(a, b, b2, b2, x, tol)?.probability;
        worst = worst.max((oc - tc).abs());
    }
    checks.push(Check {
        name: "equal tail slopes: two-change vs one-change".into(),
        gap: worst,
        limit: 2e-6,
    });

    Ok(checks)
}

/// Reproduction of the shipped power tables against their frozen references.
pub fn table_suite(tol: f64) -> Result<Vec<Check>, ValidationError> {
    let specs = [
        (PowerTable::Gamma, "full power table", 2e-3),
        (PowerTable::Gamma1, "vee-barrier power table", 1e-3),
        (PowerTable::Gamma2, "averaged power table", 2e-3),
        (PowerTable::Gamma3, "no-rise power table", 2e-3),
    ];
    let mut checks = Vec::new();
    for (which, name, limit) in specs {
        let cells = changepoint::power_table(which, tol)?;
        let reference = changepoint::reference::table(which);
        let mu_len = which.mu_grid().len();
        let mut worst: f64 = 0.0;
        for (idx, cell) in cells.iter().enumerate() {
            let row = idx / mu_len;
            let col = idx % mu_len;
            worst = worst.max((cell.value - reference[row][col]).abs());
        }
        checks.push(Check { name: format!("{name} ({} cells)", cells.len()), gap: worst, limit });
    }
    Ok(checks)
}

enum McTarget {
    Conditioned { barrier: BarrierSpec, x: f64, analytic: f64 },
    Unconditional { barrier: BarrierSpec, analytic: f64 },
}

/// Monte Carlo versus analytic values across every analytic route.
/// `paths` and `seed` drive the sampler; the grid step is fixed at 2^-11.
pub fn mc_suite(paths: u64, seed: u64, tol: f64) -> Result<Vec<Check>, ValidationError> {
    let lin = |a: f64, b: f64, t: f64| BarrierSpec::linear(a, b, t).expect("valid barrier");
    let one = |a: f64, b: f64, b2: f64, t1: f64, t2: f64| {
        BarrierSpec::one_change(a, b, b2, t1, t2).expect("valid barrier")
    };
    let two =
        |a: f64, b: f64, b2: f64, b3: f64| BarrierSpec::two_change(a, b, b2, b3).expect("valid barrier");

    let mut cases: Vec<(String, McTarget)> = Vec::new();
    // closed-form route
    for (a, b, t, x) in [(1.0, 0.0, 1.0, 0.0), (1.5, 0.5, 0.75, 0.2)] {
        cases.push((
            format!("closed a={a} b={b} T={t} x={x}"),
            McTarget::Conditioned {
                barrier: lin(a, b, t),
                x,
                analytic: survival_closed_short(a, b, t, x)?,
            },
        ));
    }
    // integer-horizon route
    for (a, b, n, x) in [(3.0, 0.0, 2u32, 0.0), (1.0, 0.5, 2, 0.5), (2.5, 0.25, 3, 0.0)] {
        cases.push((
            format!("linear a={a} b={b} n={n} x={x}"),
            McTarget::Conditioned {
                barrier: lin(a, b, n as f64),
                x,
                analytic: survival_linear_integer(a, b, n, x, tol)?.probability,
            },
        ));
    }
    // fractional-horizon route
    for (a, b, t, x) in [(3.0, 0.0, 1.5, 0.0), (1.0, 0.3, 0.5, -0.5)] {
        cases.push((
            format!("fractional a={a} b={b} T={t} x={x}"),
            McTarget::Conditioned {
                barrier: lin(a, b, t),
                x,
                analytic: survival_linear_real(a, b, t, x, tol)?.probability,
            },
        ));
    }
    // one-change route
    for (a, b, b2, x) in [(3.0, -2.0, 2.0, 0.0), (3.0, 0.0, -2.0, 0.0)] {
        cases.push((
            format!("one-change a={a} b={b} b2={b2} x={x}"),
            McTarget::Conditioned {
                barrier: one(a, b, b2, 1.0, 1.0),
                x,
                analytic: survival_one_change(a, b, b2, 1, 1, x, tol)?.probability,
            },
        ));
    }
    // two-change route
    for (a, b, b2, b3, x) in [(3.0, 0.0, -2.0, 2.0, 0.0), (2.0, 0.5, -1.0, 1.0, 0.3)] {
        cases.push((
            format!("two-change a={a} b={b} b2={b2} b3={b3} x={x}"),
            McTarget::Conditioned {
                barrier: two(a, b, b2, b3),
                x,
                analytic: survival_two_change(a, b, b2, b3, x, tol)?.probability,
            },
        ));
    }
    // unconditional start
    for t in [1.0, 2.0] {
        cases.push((
            format!("unconditional a=3 T={t}"),
            McTarget::Unconditional {
                barrier: lin(3.0, 0.0, t),
                analytic: survival_unconditional(3.0, 0.0, t, tol)?.probability,
            },
        ));
    }

    let mut checks = Vec::new();
    for (name, target) in cases {
        let (barrier, start_mode, analytic) = match target {
            McTarget::Conditioned { barrier, x, analytic } => {
                (barrier, StartMode::Conditioned(x), analytic)
            }
            McTarget::Unconditional { barrier, analytic } => {
                (barrier, StartMode::StandardNormal, analytic)
            }
        };
        let cfg = PathConfig {
            paths,
            grid_step: 0.5f64.powi(11),
            seed,
            horizon: barrier.horizon(),
            start_mode,
        };
        let est = simulate_survival(&barrier, &cfg)?;
        let band = 3.0 * est.std_error + bias_bound(&cfg);
        checks.push(Check {
            name: format!("{name}: mc {:.5} vs analytic {analytic:.5}", est.probability),
            gap: (est.probability - analytic).abs(),
            limit: band,
        });
    }
    Ok(checks)
}
