//! Brute-force references for the closed forms and the statistical claims.
//!
//! Nothing here reuses the projection or pooling shortcuts of [`crate::models`]
//! and [`crate::engine`]: suprema and infima are taken by exhaustive search over
//! a parameter grid and over every stream assignment. Unbounded regions are
//! clipped to the grid box, so results are only meaningful while the relevant
//! sample means and parameters stay inside it; [`grid_sup_loglik`] checks this.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{EngineState, InitPolicy, TestKind};
use crate::error::{Error, Result};
use crate::geometry::{InfoConstants, MAX_ENUMERATED_STREAMS};
use crate::models::{Family, Interval, JointParameter, Region, StreamModel, SufficientStat};
use crate::montecarlo::derive_trial_seed;
use crate::StreamSet;

/// Evenly spaced points on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || points < 2 {
            return Err(Error::Config(format!(
                "grid needs lo < hi and at least 2 points, got [{lo}, {hi}] x {points}"
            )));
        }
        Ok(Self { lo, hi, points })
    }

    /// `[−5, 5]` for Gaussian means, `[0, 1]` for Bernoulli probabilities.
    pub fn default_for(family: Family, points: usize) -> Self {
        match family {
            Family::GaussianMeanUnitVariance => Self { lo: -5.0, hi: 5.0, points },
            Family::Bernoulli => Self { lo: 0.0, hi: 1.0, points },
        }
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    /// Inserts a midpoint between every pair of neighbours; the old points
    /// stay in the new grid.
    pub fn refined(&self) -> Self {
        Self { points: 2 * self.points - 1, ..*self }
    }

    /// Grid points inside `interval`, plus the interval's endpoints when they
    /// fall inside the box.
    pub fn points_in(&self, interval: Interval) -> Vec<f64> {
        let h = self.step();
        let mut out: Vec<f64> = (0..self.points)
            .map(|i| if i + 1 == self.points { self.hi } else { self.lo + h * i as f64 })
            .filter(|&x| interval.contains(x))
            .collect();
        for end in [interval.lo, interval.hi] {
            if end.is_finite() && self.lo <= end && end <= self.hi {
                out.push(end);
            }
        }
        out
    }
}

/// Direct log-likelihood of a summarised sample.
fn stream_loglik(family: Family, stat: &SufficientStat, theta: f64) -> f64 {
    let n = stat.n as f64;
    match family {
        Family::GaussianMeanUnitVariance => {
            // Σ −(x−θ)²/2 − n ln√(2π) = Σ(−x²/2 − ln√(2π)) + θΣx − nθ²/2
            stat.log_base + theta * stat.sum - n * theta * theta / 2.0
        }
        Family::Bernoulli => {
            let ones = stat.sum;
            let zeros = n - ones;
            let term = |count: f64, p: f64| if count == 0.0 { 0.0 } else { count * p.ln() };
            stat.log_base + term(ones, theta) + term(zeros, 1.0 - theta)
        }
    }
}

fn grid_max(points: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    points.iter().map(|&x| f(x)).fold(f64::NEG_INFINITY, f64::max)
}

fn grid_min(points: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    points.iter().map(|&x| f(x)).fold(f64::INFINITY, f64::min)
}

/// `(log L⁰, log L¹)` by exhaustive search over stream assignments and grid
/// parameters.
///
/// For the constrained kind the objective for a fixed assignment `B` is a
/// sum of a term in the shared signal value and a term in the shared noise
/// value, so its maximum over the product grid is the sum of the two grid
/// maxima. For the unconstrained kind every stream is maximised separately
/// within its assigned region and all `2^K` assignments are scanned.
pub fn grid_sup_loglik(
    model: &StreamModel,
    stats: &[SufficientStat],
    signal_estimate: StreamSet,
    kind: TestKind,
    grid: &Grid,
) -> Result<(f64, f64)> {
    let k = stats.len();
    if k == 0 || k > MAX_ENUMERATED_STREAMS {
        return Err(Error::Capacity { streams: k, limit: MAX_ENUMERATED_STREAMS });
    }
    if model.family() == Family::GaussianMeanUnitVariance {
        for s in stats {
            if let Some(mean) = s.mean() {
                if !(grid.lo <= mean && mean <= grid.hi) {
                    return Err(Error::Precondition(format!(
                        "sample mean {mean} lies outside the oracle box [{}, {}]",
                        grid.lo, grid.hi
                    )));
                }
            }
        }
    }
    let family = model.family();
    let signal_pts = grid.points_in(model.space().signal());
    let noise_pts = grid.points_in(model.space().noise());
    if signal_pts.is_empty() || noise_pts.is_empty() {
        return Err(Error::Precondition("grid box misses one of the regions".into()));
    }

    let joint = |members: &[usize], theta: f64| -> f64 {
        members.iter().map(|&j| stream_loglik(family, &stats[j], theta)).sum()
    };
    let per_stream: Vec<(f64, f64)> = stats
        .iter()
        .map(|s| {
            (
                grid_max(&signal_pts, |u| stream_loglik(family, s, u)),
                grid_max(&noise_pts, |v| stream_loglik(family, s, v)),
            )
        })
        .collect();

    let (mut l0, mut l1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for mask in 0..(1u64 << k) {
        let b = StreamSet::from_bits(mask);
        let adds = (0..k).any(|j| b.contains(j) && !signal_estimate.contains(j));
        let drops = (0..k).any(|j| signal_estimate.contains(j) && !b.contains(j));
        if !(adds || drops) {
            continue;
        }
        let value = match kind {
            TestKind::Constrained => {
                let sig: Vec<usize> = (0..k).filter(|&j| b.contains(j)).collect();
                let noi: Vec<usize> = (0..k).filter(|&j| !b.contains(j)).collect();
                let best_u = if sig.is_empty() { 0.0 } else { grid_max(&signal_pts, |u| joint(&sig, u)) };
                let best_v = if noi.is_empty() { 0.0 } else { grid_max(&noise_pts, |v| joint(&noi, v)) };
                best_u + best_v
            }
            TestKind::Unconstrained => {
                (0..k).map(|j| if b.contains(j) { per_stream[j].0 } else { per_stream[j].1 }).sum()
            }
        };
        if adds {
            l0 = l0.max(value);
        }
        if drops {
            l1 = l1.max(value);
        }
    }
    Ok((l0, l1))
}

/// Worst-case shortfall of a grid maximum below the true supremum for a
/// sample of `total_obs` observations: the log-likelihood curvature is at
/// most `total_obs · c`, and the maximiser is at most one step from a grid
/// point.
pub fn grid_error_bound(model: &StreamModel, grid: &Grid, total_obs: u64) -> f64 {
    let h = grid.step();
    let curvature = match model.family() {
        Family::GaussianMeanUnitVariance => 1.0,
        Family::Bernoulli => {
            // |d²/dθ² (s ln θ + (n−s) ln(1−θ))| ≤ n / min(θ, 1−θ)² over the regions.
            let s = model.space();
            [s.noise().lo, s.noise().hi, s.signal().lo, s.signal().hi]
                .into_iter()
                .map(|t: f64| 1.0 / t.min(1.0 - t).powi(2))
                .fold(0.0, f64::max)
        }
    };
    h * h * total_obs as f64 * curvature / 2.0 + 1e-9
}

/// Information constants by exhaustive search over assignments and grids.
pub fn grid_info_constants(model: &StreamModel, theta: &JointParameter, grid: &Grid) -> Result<InfoConstants> {
    if !theta.is_constrained() {
        return Err(Error::Precondition("oracle constants need a constrained truth".into()));
    }
    let k = theta.len();
    if k > MAX_ENUMERATED_STREAMS {
        return Err(Error::Capacity { streams: k, limit: MAX_ENUMERATED_STREAMS });
    }
    let thetas = theta.thetas();
    let truth = theta.signal_set();
    let signal_pts = grid.points_in(model.space().signal());
    let noise_pts = grid.points_in(model.space().noise());
    let divergence = |members: &[usize], u: f64| -> f64 {
        members.iter().map(|&j| model.kl(thetas[j], u).unwrap_or(f64::INFINITY)).sum()
    };

    let (mut i0, mut i1) = (f64::INFINITY, f64::INFINITY);
    for mask in 0..(1u64 << k) {
        let b = StreamSet::from_bits(mask);
        let adds = (0..k).any(|j| b.contains(j) && !truth.contains(j));
        let drops = (0..k).any(|j| truth.contains(j) && !b.contains(j));
        if !(adds || drops) {
            continue;
        }
        let sig: Vec<usize> = (0..k).filter(|&j| b.contains(j)).collect();
        let noi: Vec<usize> = (0..k).filter(|&j| !b.contains(j)).collect();
        let du = if sig.is_empty() { 0.0 } else { grid_min(&signal_pts, |u| divergence(&sig, u)) };
        let dv = if noi.is_empty() { 0.0 } else { grid_min(&noise_pts, |v| divergence(&noi, v)) };
        if adds {
            i0 = i0.min(du + dv);
        }
        if drops {
            i1 = i1.min(du + dv);
        }
    }
    let (mut i0_tilde, mut i1_tilde) = (f64::INFINITY, f64::INFINITY);
    for j in 0..k {
        if truth.contains(j) {
            i1_tilde = i1_tilde.min(grid_min(&noise_pts, |v| divergence(&[j], v)));
        } else {
            i0_tilde = i0_tilde.min(grid_min(&signal_pts, |u| divergence(&[j], u)));
        }
    }
    Ok(InfoConstants { i0, i1, i0_tilde, i1_tilde })
}

fn require_constrained(theta: &JointParameter) -> Result<()> {
    if theta.is_constrained() {
        Ok(())
    } else {
        Err(Error::Precondition("the oracle needs a constrained truth".into()))
    }
}

/// Minimum trial count for [`mean_one_martingale_estimate`].
pub const MIN_MARTINGALE_TRIALS: u64 = 10_000;

/// Monte Carlo mean and standard error of `L̂(n) / L(n; θ)`.
pub fn mean_one_martingale_estimate(
    model: &StreamModel,
    theta: &JointParameter,
    n: u64,
    trials: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    require_constrained(theta)?;
    if trials < MIN_MARTINGALE_TRIALS {
        return Err(Error::Precondition(format!("at least {MIN_MARTINGALE_TRIALS} trials are needed, got {trials}")));
    }
    if n == 0 {
        return Ok((1.0, 0.0));
    }
    let ratios = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_trial_seed(seed, 0, t));
            let state = simulate(model, theta, n, &mut rng)?;
            Ok((state.adaptive_loglik() - state.loglik_at(theta)?).exp())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_and_se(&ratios))
}

/// Normalised stopping statistics at a fixed horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Mean of `(1/n)(log L̂ − log L⁰)`.
    pub rate0: f64,
    pub rate0_se: f64,
    /// Mean of `(1/n)(log L̂ − log L¹)`.
    pub rate1: f64,
    pub rate1_se: f64,
}

/// Smallest horizon accepted by [`lln_rate_estimate`].
pub const MIN_LLN_HORIZON: u64 = 500;

pub fn lln_rate_estimate(
    model: &StreamModel,
    theta: &JointParameter,
    n: u64,
    trials: u64,
    kind: TestKind,
    seed: u64,
) -> Result<RateEstimate> {
    require_constrained(theta)?;
    if n < MIN_LLN_HORIZON {
        return Err(Error::Precondition(format!("horizon must be at least {MIN_LLN_HORIZON}, got {n}")));
    }
    if trials < 2 {
        return Err(Error::Precondition("at least two trials are needed".into()));
    }
    let rates = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_trial_seed(seed, 0, t));
            let state = simulate(model, theta, n, &mut rng)?;
            let (s0, s1) = state.stopping_statistics(kind)?;
            Ok((s0 / n as f64, s1 / n as f64))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (r0, r1): (Vec<f64>, Vec<f64>) = rates.into_iter().unzip();
    let (rate0, rate0_se) = mean_and_se(&r0);
    let (rate1, rate1_se) = mean_and_se(&r1);
    Ok(RateEstimate { rate0, rate0_se, rate1, rate1_se })
}

fn simulate<R: Rng + ?Sized>(model: &StreamModel, theta: &JointParameter, n: u64, rng: &mut R) -> Result<EngineState> {
    let mut state = EngineState::homogeneous(*model, theta.len(), &InitPolicy::default())?;
    let mut row = vec![0.0; theta.len()];
    for _ in 0..n {
        for (x, &t) in row.iter_mut().zip(theta.thetas()) {
            *x = model.sample(t, rng)?;
        }
        state.update(&row)?;
    }
    Ok(state)
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// A constrained truth with `k` streams, a random signal set and shared
/// parameters drawn within `spread` of the region boundaries.
pub fn random_constrained_theta<R: Rng + ?Sized>(
    model: &StreamModel,
    k: usize,
    spread: f64,
    rng: &mut R,
) -> Result<JointParameter> {
    let space = model.space();
    let (sig, noi) = (space.signal(), space.noise());
    let theta1 = rng.random_range(sig.lo..=sig.hi.min(sig.lo + spread));
    let theta0 = rng.random_range(noi.lo.max(noi.hi - spread)..=noi.hi);
    let signals = StreamSet::from_bits(rng.random::<u64>() & StreamSet::full(k).bits());
    JointParameter::constrained(space, k, signals, theta1, theta0)
}

/// An engine state after `n` rounds of data from per-stream parameters drawn
/// independently within `spread` of the region boundaries.
pub fn random_state<R: Rng + ?Sized>(
    model: &StreamModel,
    k: usize,
    n: u64,
    spread: f64,
    rng: &mut R,
) -> Result<EngineState> {
    let space = model.space();
    let thetas: Vec<f64> = (0..k)
        .map(|_| {
            let region = if rng.random::<bool>() { Region::Signal } else { Region::Noise };
            let iv = space.interval(region);
            let (lo, hi) = match region {
                Region::Signal => (iv.lo, iv.hi.min(iv.lo + spread)),
                _ => (iv.lo.max(iv.hi - spread), iv.hi),
            };
            rng.random_range(lo..=hi)
        })
        .collect();
    let theta = JointParameter::new(space, thetas)?;
    simulate(model, &theta, n, rng)
}
