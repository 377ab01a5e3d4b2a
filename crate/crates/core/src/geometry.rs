//! Information constants and the universal lower bound.
//!
//! For a constrained truth `θ` with signal set `A(θ)`:
//!
//! ```text
//! I(θ, Θ^B) = inf_{u ∈ Θ¹} Σ_{k ∈ B} I(θ_k, u) + inf_{v ∈ Θ⁰} Σ_{k ∉ B} I(θ_k, v)
//! I⁰(θ)     = min { I(θ, Θ^B) : B ∖ A(θ) ≠ ∅ }
//! I¹(θ)     = min { I(θ, Θ^B) : A(θ) ∖ B ≠ ∅ }
//! Ĩ⁰(θ)     = min_{k ∉ A(θ)} I(θ_k, Θ¹)
//! Ĩ¹(θ)     = min_{k ∈ A(θ)} I(θ_k, Θ⁰)
//! ```
//!
//! Empty minima are `+∞`, carried as `f64::INFINITY`.

use serde::{Deserialize, Serialize};

use crate::engine::TestKind;
use crate::error::{Error, Result};
use crate::models::{Family, JointParameter, Region, StreamModel};
use crate::StreamSet;

/// Largest `K` for which the `2^K` assignments are enumerated.
pub const MAX_ENUMERATED_STREAMS: usize = 16;

/// Absolute tolerance on the minimiser in the golden-section search.
pub const GOLDEN_SECTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoConstants {
    pub i0: f64,
    pub i1: f64,
    pub i0_tilde: f64,
    pub i1_tilde: f64,
}

impl InfoConstants {
    /// Constants that govern a test of the given kind: the constrained pair
    /// `(I⁰, I¹)` or, for the unconstrained baseline, `(Ĩ⁰, Ĩ¹)` moved into
    /// the leading slots.
    pub fn for_kind(&self, kind: TestKind) -> InfoConstants {
        match kind {
            TestKind::Constrained => *self,
            TestKind::Unconstrained => InfoConstants { i0: self.i0_tilde, i1: self.i1_tilde, ..*self },
        }
    }
}

/// `φ(x, y) = x log(x / (1 − y)) + (1 − x) log((1 − x) / y)` on
/// `x, y ∈ (0, 1)`, `x + y < 1`.
pub fn phi(x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0 && x + y < 1.0) {
        return Err(Error::Domain(format!("phi needs x, y in (0, 1) with x + y < 1, got ({x}, {y})")));
    }
    Ok(x * (x / (1.0 - y)).ln() + (1.0 - x) * ((1.0 - x) / y).ln())
}

/// `inf_{θ' ∈ region} I(θ, θ')`.
///
/// `θ' ↦ I(θ, θ')` is convex with its minimum at `θ` for both families, so
/// the infimum over an interval sits at the projection of `θ`.
pub fn kl_to_region(model: &StreamModel, theta: f64, region: Region) -> Result<f64> {
    if !model.space().contains(theta) {
        return Err(Error::Domain(format!("parameter {theta} lies outside both regions")));
    }
    if region == Region::Full {
        return Ok(0.0);
    }
    let nearest = model.space().interval(region).clamp(theta);
    Ok(model.kl_unchecked(theta, nearest))
}

/// `inf_{u ∈ region} Σ_k I(θ_k, u)` over the given coordinates.
fn pooled_kl_infimum(model: &StreamModel, coords: &[f64], region: Region) -> f64 {
    if coords.is_empty() {
        return 0.0;
    }
    let interval = model.space().interval(region);
    let total = |u: f64| coords.iter().map(|&t| model.kl_unchecked(t, u)).sum::<f64>();
    match model.family() {
        Family::GaussianMeanUnitVariance => {
            let mean = coords.iter().sum::<f64>() / coords.len() as f64;
            total(interval.clamp(mean))
        }
        Family::Bernoulli => {
            let u = golden_section_min(total, interval.lo, interval.hi, GOLDEN_SECTION_TOL);
            total(u).min(total(interval.lo)).min(total(interval.hi))
        }
    }
}

/// Minimiser of a unimodal function on `[lo, hi]`.
fn golden_section_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn require_constrained(theta: &JointParameter) -> Result<()> {
    if theta.is_constrained() {
        Ok(())
    } else {
        Err(Error::Precondition("joint parameter does not share one signal value and one noise value".into()))
    }
}

/// `I(θ, Θ^B)`: the smallest divergence from `θ` to a constrained parameter
/// whose signal set is exactly `b`.
pub fn assignment_kl(model: &StreamModel, theta: &JointParameter, b: StreamSet) -> Result<f64> {
    require_constrained(theta)?;
    let k = theta.len();
    if b.difference(StreamSet::full(k)) != StreamSet::empty() {
        return Err(Error::Precondition(format!("assignment {b} names streams beyond K = {k}")));
    }
    Ok(assignment_kl_unchecked(model, theta.thetas(), b))
}

fn assignment_kl_unchecked(model: &StreamModel, thetas: &[f64], b: StreamSet) -> f64 {
    let (signal, noise): (Vec<_>, Vec<_>) = thetas.iter().enumerate().partition(|(k, _)| b.contains(*k));
    let signal: Vec<f64> = signal.into_iter().map(|(_, &t)| t).collect();
    let noise: Vec<f64> = noise.into_iter().map(|(_, &t)| t).collect();
    pooled_kl_infimum(model, &signal, Region::Signal) + pooled_kl_infimum(model, &noise, Region::Noise)
}

pub fn info_constants(model: &StreamModel, theta: &JointParameter) -> Result<InfoConstants> {
    require_constrained(theta)?;
    let k = theta.len();
    if k > MAX_ENUMERATED_STREAMS {
        return Err(Error::Capacity { streams: k, limit: MAX_ENUMERATED_STREAMS });
    }
    let truth = theta.signal_set();
    let (mut i0, mut i1) = (f64::INFINITY, f64::INFINITY);
    for b in StreamSet::all_subsets(k) {
        let adds_signal = !b.difference(truth).is_empty();
        let drops_signal = !truth.difference(b).is_empty();
        if !(adds_signal || drops_signal) {
            continue;
        }
        let d = assignment_kl_unchecked(model, theta.thetas(), b);
        if adds_signal {
            i0 = i0.min(d);
        }
        if drops_signal {
            i1 = i1.min(d);
        }
    }
    let (i0_tilde, i1_tilde) = unconstrained_constants(model, theta)?;
    Ok(InfoConstants { i0, i1, i0_tilde, i1_tilde })
}

/// `(Ĩ⁰(θ), Ĩ¹(θ))`, defined for every joint parameter, constrained or not.
pub fn unconstrained_constants(model: &StreamModel, theta: &JointParameter) -> Result<(f64, f64)> {
    let (thetas, truth) = (theta.thetas(), theta.signal_set());
    let i0_tilde = truth
        .complement(theta.len())
        .iter()
        .map(|j| kl_to_region(model, thetas[j], Region::Signal))
        .try_fold(f64::INFINITY, |acc, d| d.map(|d| acc.min(d)))?;
    let i1_tilde = truth
        .iter()
        .map(|j| kl_to_region(model, thetas[j], Region::Noise))
        .try_fold(f64::INFINITY, |acc, d| d.map(|d| acc.min(d)))?;
    Ok((i0_tilde, i1_tilde))
}

/// `max{ φ(α+β, β) / I⁰, φ(α+β, α) / I¹ }`, the minimum expected sample
/// size of any test meeting both error levels, for `α + β < 1/2`.
pub fn lower_bound(constants: &InfoConstants, alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("error levels must lie in (0, 1), got ({alpha}, {beta})")));
    }
    if alpha + beta >= 0.5 {
        return Err(Error::Domain(format!("the lower bound needs alpha + beta < 1/2, got {}", alpha + beta)));
    }
    let first = phi(alpha + beta, beta)? / constants.i0;
    let second = phi(alpha + beta, alpha)? / constants.i1;
    Ok(first.max(second))
}

/// First-order approximation `max{ |log β| / I⁰, |log α| / I¹ }`.
pub fn asymptotic_approximation(constants: &InfoConstants, alpha: f64, beta: f64) -> f64 {
    asymptotic_from_log_thresholds(constants, alpha.ln().abs(), beta.ln().abs())
}

/// Same as [`asymptotic_approximation`] with `α = 1/a`, `β = 1/b` given as
/// `log a`, `log b`.
pub fn asymptotic_from_log_thresholds(constants: &InfoConstants, log_a: f64, log_b: f64) -> f64 {
    (log_b / constants.i0).max(log_a / constants.i1)
}
