//! Oracle cross-checks packaged as named pass/fail outcomes.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::TestKind;
use crate::error::{Error, Result};
use crate::geometry::{self, InfoConstants};
use crate::models::{JointParameter, StreamModel};
use crate::oracle::{self, Grid};

/// Absolute tolerance between grid and closed-form information constants.
pub const CONSTANTS_TOL: f64 = 1e-4;
/// Relative tolerance of the normalised stopping statistics at the horizon.
pub const LLN_REL_TOL: f64 = 0.05;
/// Allowed distance of the martingale mean from one, in standard errors.
pub const MARTINGALE_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub random_cases: usize,
    pub grid_points: usize,
    pub martingale_trials: u64,
    pub martingale_horizons: Vec<u64>,
    pub lln_horizon: u64,
    pub lln_trials: u64,
    pub max_state_n: u64,
}

impl Scale {
    pub fn plan(self) -> Plan {
        match self {
            Scale::Quick => Plan {
                random_cases: 20,
                grid_points: 10_000,
                martingale_trials: 20_000,
                martingale_horizons: vec![1, 5, 10],
                lln_horizon: 2000,
                lln_trials: 100,
                max_state_n: 50,
            },
            Scale::Full => Plan {
                random_cases: 100,
                grid_points: 10_000,
                martingale_trials: 100_000,
                martingale_horizons: vec![1, 5, 10],
                lln_horizon: 2000,
                lln_trials: 500,
                max_state_n: 50,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

fn outcome(name: impl Into<String>, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name: name.into(), passed, detail }
}

fn constants_gap(a: &InfoConstants, b: &InfoConstants) -> f64 {
    [(a.i0, b.i0), (a.i1, b.i1), (a.i0_tilde, b.i0_tilde), (a.i1_tilde, b.i1_tilde)]
        .into_iter()
        .map(|(x, y)| {
            if x.is_infinite() || y.is_infinite() {
                if x == y {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (x - y).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Runs every cross-check for `model` around the truth `theta`.
pub fn run_validation(
    model: &StreamModel,
    theta: &JointParameter,
    scale: Scale,
    seed: u64,
) -> Result<Vec<CheckOutcome>> {
    if !theta.is_constrained() {
        return Err(Error::Config("validation needs a constrained truth".into()));
    }
    let plan = scale.plan();
    let grid = Grid::default_for(model.family(), plan.grid_points);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let closed = geometry::info_constants(model, theta)?;
    let brute = oracle::grid_info_constants(model, theta, &grid)?;
    let gap = constants_gap(&closed, &brute);
    out.push(outcome(
        "constants/truth",
        gap <= CONSTANTS_TOL,
        format!(
            "I0={} I1={} I0~={} I1~={}, max grid gap {gap:.3e} (tol {CONSTANTS_TOL:e})",
            closed.i0, closed.i1, closed.i0_tilde, closed.i1_tilde
        ),
    ));

    let mut worst = 0.0f64;
    for _ in 0..plan.random_cases {
        let k = rng.random_range(2..=3);
        let t = oracle::random_constrained_theta(model, k, 2.0, &mut rng)?;
        let gap = constants_gap(&geometry::info_constants(model, &t)?, &oracle::grid_info_constants(model, &t, &grid)?);
        worst = worst.max(gap);
    }
    out.push(outcome(
        "constants/random",
        worst <= CONSTANTS_TOL,
        format!("{} random truths, max grid gap {worst:.3e} (tol {CONSTANTS_TOL:e})", plan.random_cases),
    ));

    let (mut worst_ratio, mut overshoot) = (0.0f64, false);
    for _ in 0..plan.random_cases {
        let k = rng.random_range(2..=3);
        let n = rng.random_range(1..=plan.max_state_n);
        let state = oracle::random_state(model, k, n, 1.5, &mut rng)?;
        let est = state.estimate_signal_set()?;
        let bound = oracle::grid_error_bound(model, &grid, n * k as u64);
        for kind in [TestKind::Constrained, TestKind::Unconstrained] {
            let exact = state.sup_loglik_error_sets(kind)?;
            let brute = oracle::grid_sup_loglik(model, state.stats(), est, kind, &grid)?;
            for (e, b) in [(exact.0, brute.0), (exact.1, brute.1)] {
                if e == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
                    overshoot |= e != b;
                    continue;
                }
                overshoot |= b > e + 1e-9;
                worst_ratio = worst_ratio.max((e - b) / bound);
            }
        }
    }
    out.push(outcome(
        "suprema/random",
        !overshoot && worst_ratio <= 1.0,
        format!(
            "{} random states, worst shortfall {:.3} of the grid bound{}",
            plan.random_cases,
            worst_ratio,
            if overshoot { ", grid exceeded closed form" } else { "" }
        ),
    ));

    for &n in &plan.martingale_horizons {
        let (mean, se) = oracle::mean_one_martingale_estimate(model, theta, n, plan.martingale_trials, rng.random())?;
        let z = (mean - 1.0) / se;
        out.push(outcome(
            format!("martingale/n={n}"),
            z.abs() <= MARTINGALE_SIGMAS,
            format!("mean {mean:.5} ± {se:.5} ({z:+.2} SE, {} trials)", plan.martingale_trials),
        ));
    }

    for kind in [TestKind::Constrained, TestKind::Unconstrained] {
        let leading = closed.for_kind(kind);
        let est = oracle::lln_rate_estimate(model, theta, plan.lln_horizon, plan.lln_trials, kind, rng.random())?;
        for (label, rate, target) in [("0", est.rate0, leading.i0), ("1", est.rate1, leading.i1)] {
            let name = format!("lln/{}/rate{label}", kind.as_str());
            if target.is_infinite() {
                out.push(outcome(name, rate.is_infinite(), format!("target +inf, measured {rate}")));
                continue;
            }
            let rel = (rate - target).abs() / target;
            out.push(outcome(
                name,
                rel <= LLN_REL_TOL,
                format!(
                    "mean {rate:.5} vs {target:.5} ({:.2}% off, n = {}, {} trials)",
                    100.0 * rel,
                    plan.lln_horizon,
                    plan.lln_trials
                ),
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_validation_passes_on_reference_setup() {
        let model = StreamModel::gaussian(0.1).unwrap();
        let theta = JointParameter::new(model.space(), vec![0.5, -0.5]).unwrap();
        let checks = run_validation(&model, &theta, Scale::Quick, 11).unwrap();
        assert_eq!(checks.len(), 3 + 3 + 4);
        // The n >= 2 martingale checks estimate an infinite-variance mean and are
        // reported, not asserted.
        for c in checks.iter().filter(|c| !c.name.starts_with("martingale/") || c.name == "martingale/n=1") {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn unconstrained_truth_is_rejected() {
        let model = StreamModel::gaussian(0.1).unwrap();
        let theta = JointParameter::new(model.space(), vec![0.5, 0.7]).unwrap();
        assert!(run_validation(&model, &theta, Scale::Quick, 1).is_err());
    }
}
