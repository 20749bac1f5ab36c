//! Command-line interface: single survival probabilities, power-table
//! generation, run-length queries and the validation suites.
//!
//! Values are printed as JSON on stdout (10 significant digits) or CSV for
//! tables; timing goes to stderr so stdout stays bit-reproducible. Exit
//! codes: 0 success, 2 domain error, 3 capability limit, 4 accuracy
//! failure, 5 validation violation.

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use slepian::changepoint::{self, PowerTable};
use slepian::fpt::{self, FptError, FptRequest, Method, RouteKind};
use slepian::mc::{simulate_survival, McError, PathConfig, StartMode};
use slepian::validation;
use slepian::BarrierSpec;
use std::process::ExitCode;
use std::time::Instant;

const EXIT_DOMAIN: u8 = 2;
const EXIT_CAPABILITY: u8 = 3;
const EXIT_ACCURACY: u8 = 4;
const EXIT_VALIDATION: u8 = 5;

#[derive(Parser)]
#[command(
    name = "slepian",
    about = "First-passage probabilities for the Slepian process across piecewise-linear barriers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct McArgs {
    /// Monte Carlo path count
    #[arg(long, default_value_t = 1_000_000)]
    paths: u64,
    /// Monte Carlo grid step (reciprocal of a power of two)
    #[arg(long, default_value_t = 0.00048828125)]
    dt: f64,
    /// Monte Carlo seed
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Survival probability for one barrier and start value.
    ///
    /// Barrier shorthands: "a,b,T" (single slope), "a,b,b',T,T'" (one slope
    /// change), "a,b,b',b''" (two changes over unit segments), or a JSON
    /// object {"intercept": a, "segments": [[slope, duration], ...]}.
    Fpt {
        /// Barrier shorthand or JSON
        #[arg(long)]
        barrier: String,
        /// Conditioning start value S(0) = x
        #[arg(long, allow_negative_numbers = true)]
        x: f64,
        /// auto | closed | det | mc
        #[arg(long, default_value = "auto")]
        method: String,
        /// Absolute tolerance for analytic routes
        #[arg(long, env = "SLEPIAN_TOL", default_value_t = 1e-7)]
        tol: f64,
        /// Rescale an epidemic window of length l onto the unit window:
        /// t -> t/l and barrier -> barrier/sqrt(l) before solving
        #[arg(long)]
        rescale_l: Option<f64>,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Regenerate one of the shipped detection-power tables as CSV.
    Tables {
        /// Table number: 1 (full power), 2 (vee barrier), 3 (averaged), 4 (no rise)
        #[arg(long)]
        which: u8,
        #[arg(long, env = "SLEPIAN_TOL", default_value_t = 1e-7)]
        tol: f64,
    },
    /// Average run length at a threshold, or the threshold for a target.
    Arl {
        /// Threshold of the moving-sum statistic
        #[arg(long, conflicts_with = "target")]
        h: Option<f64>,
        /// Target average run length to invert
        #[arg(long)]
        target: Option<f64>,
        #[arg(long, env = "SLEPIAN_TOL", default_value_t = 1e-8)]
        tol: f64,
    },
    /// Run a validation suite and report per-case margins.
    Validate {
        /// seams | tables | mc
        #[arg(long)]
        suite: String,
        /// Path budget for the mc suite (accepts forms like 1e6)
        #[arg(long, default_value = "1e6")]
        budget: String,
        #[arg(long, env = "SLEPIAN_TOL", default_value_t = 1e-7)]
        tol: f64,
        /// Seed for the mc suite
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// CSV of the power ratio gamma(x,h,mu)/gamma(0,h,mu) over a start grid,
    /// for external plotting.
    RatioCurve {
        #[arg(long, default_value_t = 3.0)]
        h: f64,
        #[arg(long, default_value_t = 3.0)]
        mu: f64,
        #[arg(long, default_value_t = -4.0, allow_negative_numbers = true)]
        x_min: f64,
        #[arg(long, default_value_t = 2.5, allow_negative_numbers = true)]
        x_max: f64,
        #[arg(long, default_value_t = 0.5)]
        step: f64,
        #[arg(long, env = "SLEPIAN_TOL", default_value_t = 1e-7)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let code = run(cli);
    eprintln!("wall_ms: {:.1}", started.elapsed().as_secs_f64() * 1e3);
    code
}

fn run(cli: Cli) -> ExitCode {
    match cli.command {
        Command::Fpt { barrier, x, method, tol, rescale_l, mc } => {
            cmd_fpt(&barrier, x, &method, tol, rescale_l, &mc)
        }
        Command::Tables { which, tol } => cmd_tables(which, tol),
        Command::Arl { h, target, tol } => cmd_arl(h, target, tol),
        Command::Validate { suite, budget, tol, seed } => cmd_validate(&suite, &budget, tol, seed),
        Command::RatioCurve { h, mu, x_min, x_max, step, tol } => {
            cmd_ratio_curve(h, mu, x_min, x_max, step, tol)
        }
    }
}

/// Round to 10 significant digits for display.
fn sig10(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.9e}").parse().unwrap_or(v)
}

fn fail(code: u8, message: &str) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn fpt_error_exit(err: &FptError) -> ExitCode {
    let code = match err {
        FptError::Domain(_) => EXIT_DOMAIN,
        FptError::Capability(_) => EXIT_CAPABILITY,
        FptError::Accuracy(_) => EXIT_ACCURACY,
    };
    fail(code, &err.to_string())
}

fn parse_barrier(text: &str) -> Result<BarrierSpec, String> {
    let trimmed = text.trim();
    if trimmed.starts_with('{') {
        return serde_json::from_str(trimmed).map_err(|e| format!("barrier JSON: {e}"));
    }
    let parts: Result<Vec<f64>, _> = trimmed.split(',').map(|p| p.trim().parse::<f64>()).collect();
    let parts = parts.map_err(|e| format!("barrier shorthand: {e}"))?;
    let built = match parts.as_slice() {
        [a, b, t] => BarrierSpec::linear(*a, *b, *t),
        [a, b, b2, b3] => BarrierSpec::two_change(*a, *b, *b2, *b3),
        [a, b, b2, t1, t2] => BarrierSpec::one_change(*a, *b, *b2, *t1, *t2),
        _ => {
            return Err(format!(
                "barrier shorthand needs 3 (a,b,T), 4 (a,b,b',b'') or 5 (a,b,b',T,T') numbers, got {}",
                parts.len()
            ))
        }
    };
    built.map_err(|e| e.to_string())
}

fn parse_method(text: &str) -> Result<Method, String> {
    match text {
        "auto" => Ok(Method::Auto),
        "closed" => Ok(Method::ClosedForm),
        "det" => Ok(Method::Determinant),
        "mc" => Ok(Method::MonteCarlo),
        other => Err(format!("unknown method {other:?}; use auto|closed|det|mc")),
    }
}

fn cmd_fpt(
    barrier_text: &str,
    x: f64,
    method_text: &str,
    tol: f64,
    rescale_l: Option<f64>,
    mc: &McArgs,
) -> ExitCode {
    let mut barrier = match parse_barrier(barrier_text) {
        Ok(b) => b,
        Err(e) => return fail(EXIT_DOMAIN, &e),
    };
    if let Some(l) = rescale_l {
        barrier = match barrier.rescaled(l) {
            Ok(b) => b,
            Err(e) => return fail(EXIT_DOMAIN, &e.to_string()),
        };
    }
    let method = match parse_method(method_text) {
        Ok(m) => m,
        Err(e) => return fail(EXIT_DOMAIN, &e),
    };
    let route = match fpt::plan(&barrier, method) {
        Ok(r) => r,
        Err(e) => return fpt_error_exit(&e),
    };
    let inputs = json!({
        "barrier": barrier,
        "x": x,
        "method": method_text,
        "tol": tol,
    });
    match route {
        RouteKind::MonteCarlo => {
            let cfg = PathConfig {
                paths: mc.paths,
                grid_step: mc.dt,
                seed: mc.seed,
                horizon: barrier.horizon(),
                start_mode: StartMode::Conditioned(x),
            };
            let est = match simulate_survival(&barrier, &cfg) {
                Ok(e) => e,
                Err(McError::ResourceCap { .. }) => {
                    return fail(EXIT_CAPABILITY, "path budget exceeds the resource cap")
                }
                Err(e) => return fail(EXIT_DOMAIN, &e.to_string()),
            };
            let mut inputs = inputs;
            inputs["paths"] = json!(est.paths);
            inputs["dt"] = json!(mc.dt);
            inputs["seed"] = json!(est.seed);
            let out = json!({
                "value": sig10(est.probability),
                "route": "monte-carlo",
                "std_error": sig10(est.std_error),
                "inputs": inputs,
            });
            println!("{out}");
            ExitCode::SUCCESS
        }
        _ => {
            let req = FptRequest { barrier: barrier.clone(), start_value: x, method, tol };
            match fpt::solve(&req) {
                Ok(sol) => {
                    let out = json!({
                        "value": sig10(sol.probability),
                        "route": sol.route.label(),
                        "err": sig10(sol.error_estimate),
                        "evaluations": sol.evaluations,
                        "inputs": inputs,
                    });
                    println!("{out}");
                    ExitCode::SUCCESS
                }
                Err(e) => fpt_error_exit(&e),
            }
        }
    }
}

fn cmd_tables(which: u8, tol: f64) -> ExitCode {
    let table = match PowerTable::from_index(which) {
        Some(t) => t,
        None => return fail(EXIT_DOMAIN, &format!("table number must be 1..=4, got {which}")),
    };
    let cells = match changepoint::power_table(table, tol) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_ACCURACY, &e.to_string()),
    };
    println!("h,C,mu,gamma,gamma1,gamma2,gamma3");
    for cell in cells {
        let mut cols = [String::new(), String::new(), String::new(), String::new()];
        let idx = which as usize - 1;
        cols[idx] = format!("{:.4}", cell.value);
        println!(
            "{},{},{},{},{},{},{}",
            cell.h, cell.target_arl, cell.mu, cols[0], cols[1], cols[2], cols[3]
        );
    }
    ExitCode::SUCCESS
}

fn cmd_arl(h: Option<f64>, target: Option<f64>, tol: f64) -> ExitCode {
    match (h, target) {
        (Some(h), None) => {
            if h < changepoint::ARL_VALIDATED_THRESHOLD {
                eprintln!(
                    "warning: threshold {h} is below the validated range h >= {}; \
                     the run-length approximation degrades",
                    changepoint::ARL_VALIDATED_THRESHOLD
                );
            }
            match changepoint::arl(h, tol) {
                Ok(value) => {
                    println!("{}", json!({"h": h, "arl": sig10(value), "tol": tol}));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_ACCURACY, &e.to_string()),
            }
        }
        (None, Some(target)) => match changepoint::threshold_for_arl(target, tol) {
            Ok(h) => {
                println!("{}", json!({"target": target, "h": sig10(h), "tol": tol}));
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_DOMAIN, &e.to_string()),
        },
        _ => fail(EXIT_DOMAIN, "provide exactly one of --h or --target"),
    }
}

fn parse_budget(text: &str) -> Result<u64, String> {
    let v: f64 = text.parse().map_err(|e| format!("budget: {e}"))?;
    if !v.is_finite() || !(1.0..=1e12).contains(&v) {
        return Err(format!("budget {text} out of range"));
    }
    Ok(v.round() as u64)
}

fn report_checks(checks: &[validation::Check]) -> ExitCode {
    let mut failures = 0usize;
    for check in checks {
        let status = if check.passed() { "pass" } else { "FAIL" };
        println!(
            "{status}  {}  margin {:+.3e} (gap {:.3e}, limit {:.3e})",
            check.name,
            check.limit - check.gap,
            check.gap,
            check.limit
        );
        if !check.passed() {
            failures += 1;
        }
    }
    if failures > 0 {
        eprintln!("error: {failures} validation check(s) failed");
        ExitCode::from(EXIT_VALIDATION)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_validate(suite: &str, budget: &str, tol: f64, seed: u64) -> ExitCode {
    match suite {
        "seams" => match validation::seam_suite(tol) {
            Ok(checks) => report_checks(&checks),
            Err(e) => fail(EXIT_ACCURACY, &e.to_string()),
        },
        "tables" => match validation::table_suite(tol) {
            Ok(checks) => report_checks(&checks),
            Err(e) => fail(EXIT_ACCURACY, &e.to_string()),
        },
        "mc" => {
            let paths = match parse_budget(budget) {
                Ok(p) => p,
                Err(e) => return fail(EXIT_DOMAIN, &e),
            };
            match validation::mc_suite(paths, seed, tol) {
                Ok(checks) => report_checks(&checks),
                Err(validation::ValidationError::Mc(McError::ResourceCap { .. })) => {
                    fail(EXIT_CAPABILITY, "budget exceeds the resource cap")
                }
                Err(e) => fail(EXIT_ACCURACY, &e.to_string()),
            }
        }
        other => fail(EXIT_DOMAIN, &format!("unknown suite {other:?}; use seams|tables|mc")),
    }
}

fn cmd_ratio_curve(h: f64, mu: f64, x_min: f64, x_max: f64, step: f64, tol: f64) -> ExitCode {
    if !(step > 0.0 && x_max >= x_min) {
        return fail(EXIT_DOMAIN, "need step > 0 and x_max >= x_min");
    }
    let base = match changepoint::power_gamma(0.0, h, mu, tol) {
        Ok(g) => g,
        Err(e) => return fail(EXIT_ACCURACY, &e.to_string()),
    };
    println!("x,gamma,ratio");
    let n = ((x_max - x_min) / step).round() as usize;
    for k in 0..=n {
        let x = x_min + k as f64 * step;
        if x >= h {
            break;
        }
        match changepoint::power_gamma(x, h, mu, tol) {
            Ok(g) => println!("{x},{:.6},{:.6}", g, g / base),
            Err(e) => return fail(EXIT_ACCURACY, &e.to_string()),
        }
    }
    ExitCode::SUCCESS
}
