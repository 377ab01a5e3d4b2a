//! Observation families, partitioned parameter spaces and the closed-form
//! likelihood maximisations the engine builds on.
//!
//! Both shipped families are one-parameter exponential families in their
//! mean parameterisation, so the log-likelihood of a stream depends on the
//! data only through `(n, Σx)` plus a parameter-free base-measure term, and it
//! is concave in the parameter. Maximising over a closed interval therefore
//! reduces to clipping the sample mean into the interval.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::StreamSet;

/// `ln √(2π)`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// `N(θ, 1)` with respect to Lebesgue measure.
    GaussianMeanUnitVariance,
    /// `Bernoulli(θ)` with respect to counting measure on `{0, 1}`.
    Bernoulli,
}

impl Family {
    /// Log of the parameter-free factor `h(x)` in `f_θ(x) = h(x)·exp(θx − A(θ))`
    /// (mean-parameter form for the Gaussian; zero for the Bernoulli).
    fn log_base_measure(self, x: f64) -> f64 {
        match self {
            Family::GaussianMeanUnitVariance => -0.5 * x * x - LN_SQRT_2PI,
            Family::Bernoulli => 0.0,
        }
    }

    fn check_observation(self, x: f64) -> Result<()> {
        match self {
            Family::GaussianMeanUnitVariance if !x.is_finite() => {
                Err(Error::Domain(format!("gaussian observation must be finite, got {x}")))
            }
            Family::Bernoulli if x != 0.0 && x != 1.0 => {
                Err(Error::Domain(format!("bernoulli observation must be 0 or 1, got {x}")))
            }
            _ => Ok(()),
        }
    }
}

/// Which part of the parameter space a supremum or projection ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// Θ⁰
    Noise,
    /// Θ¹
    Signal,
    /// Θ = Θ⁰ ∪ Θ¹
    Full,
}

/// A closed interval with possibly infinite endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return Err(Error::Config(format!("[{lo}, {hi}] is not a non-empty closed interval")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Nearest point of the interval.
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

/// The noise region Θ⁰ and the signal region Θ¹, with every noise parameter
/// strictly below every signal parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    noise: Interval,
    signal: Interval,
}

impl ParameterSpace {
    pub fn new(theta0_lo: f64, theta0_hi: f64, theta1_lo: f64, theta1_hi: f64) -> Result<Self> {
        let noise = Interval::new(theta0_lo, theta0_hi)?;
        let signal = Interval::new(theta1_lo, theta1_hi)?;
        if noise.hi >= signal.lo {
            return Err(Error::Config(format!(
                "noise region [{}, {}] must lie strictly below signal region [{}, {}]",
                noise.lo, noise.hi, signal.lo, signal.hi
            )));
        }
        Ok(Self { noise, signal })
    }

    /// `Θ⁰ = (−∞, −δ]`, `Θ¹ = [δ, ∞)`.
    pub fn symmetric(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!("indifference half-width must be positive, got {delta}")));
        }
        Self::new(f64::NEG_INFINITY, -delta, delta, f64::INFINITY)
    }

    pub fn noise(&self) -> Interval {
        self.noise
    }

    pub fn signal(&self) -> Interval {
        self.signal
    }

    pub fn contains(&self, theta: f64) -> bool {
        self.noise.contains(theta) || self.signal.contains(theta)
    }

    /// `Noise` or `Signal` for a point of Θ, `None` otherwise.
    pub fn classify(&self, theta: f64) -> Option<Region> {
        if self.signal.contains(theta) {
            Some(Region::Signal)
        } else if self.noise.contains(theta) {
            Some(Region::Noise)
        } else {
            None
        }
    }

    /// The interval behind `Noise` or `Signal`.
    ///
    /// # Panics
    /// On `Region::Full`, which is not an interval.
    pub fn interval(&self, region: Region) -> Interval {
        match region {
            Region::Noise => self.noise,
            Region::Signal => self.signal,
            Region::Full => panic!("the full parameter space is a union of two intervals"),
        }
    }
}

/// Running count, sum and log base measure of one stream's observations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SufficientStat {
    pub n: u64,
    pub sum: f64,
    /// `Σ log h(x_t)`; shifts every log-likelihood by the same amount so that
    /// suprema and the adaptive likelihood are on one absolute scale.
    pub log_base: f64,
}

impl SufficientStat {
    pub fn push(&mut self, family: Family, x: f64) {
        self.n += 1;
        self.sum += x;
        self.log_base += family.log_base_measure(x);
    }

    pub fn from_observations(family: Family, xs: &[f64]) -> Self {
        let mut stat = Self::default();
        for &x in xs {
            stat.push(family, x);
        }
        stat
    }

    /// Statistics of the concatenated samples.
    pub fn merge(&self, other: &Self) -> Self {
        Self { n: self.n + other.n, sum: self.sum + other.sum, log_base: self.log_base + other.log_base }
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// An observation family together with its partitioned parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamModel {
    family: Family,
    space: ParameterSpace,
}

impl StreamModel {
    pub fn new(family: Family, space: ParameterSpace) -> Result<Self> {
        if family == Family::Bernoulli {
            for region in [space.noise, space.signal] {
                if !(region.lo > 0.0 && region.hi < 1.0) {
                    return Err(Error::Config(format!(
                        "bernoulli region [{}, {}] must lie inside (0, 1)",
                        region.lo, region.hi
                    )));
                }
            }
        }
        let model = Self { family, space };
        let gap = model.kl_unchecked(space.noise.hi, space.signal.lo);
        if gap.is_nan() || gap <= 0.0 {
            return Err(Error::Config("noise and signal regions are not separated".into()));
        }
        Ok(model)
    }

    /// Unit-variance Gaussian mean with indifference zone `(−δ, δ)`.
    pub fn gaussian(delta: f64) -> Result<Self> {
        Self::new(Family::GaussianMeanUnitVariance, ParameterSpace::symmetric(delta)?)
    }

    pub fn bernoulli(noise: (f64, f64), signal: (f64, f64)) -> Result<Self> {
        Self::new(Family::Bernoulli, ParameterSpace::new(noise.0, noise.1, signal.0, signal.1)?)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    fn check_param(&self, theta: f64) -> Result<()> {
        if self.space.contains(theta) {
            Ok(())
        } else {
            Err(Error::Domain(format!("parameter {theta} lies outside both regions")))
        }
    }

    pub fn check_observation(&self, x: f64) -> Result<()> {
        self.family.check_observation(x)
    }

    /// `log f_θ(x)`.
    pub fn log_density(&self, theta: f64, x: f64) -> Result<f64> {
        self.check_param(theta)?;
        self.family.check_observation(x)?;
        Ok(self.log_density_unchecked(theta, x))
    }

    #[inline]
    pub(crate) fn log_density_unchecked(&self, theta: f64, x: f64) -> f64 {
        match self.family {
            Family::GaussianMeanUnitVariance => {
                let d = x - theta;
                -0.5 * d * d - LN_SQRT_2PI
            }
            Family::Bernoulli => {
                if x == 1.0 {
                    theta.ln()
                } else {
                    (1.0 - theta).ln()
                }
            }
        }
    }

    /// Kullback-Leibler number `I(θ, θ')`.
    pub fn kl(&self, theta: f64, theta_p: f64) -> Result<f64> {
        self.check_param(theta)?;
        self.check_param(theta_p)?;
        Ok(self.kl_unchecked(theta, theta_p))
    }

    pub(crate) fn kl_unchecked(&self, theta: f64, theta_p: f64) -> f64 {
        match self.family {
            Family::GaussianMeanUnitVariance => 0.5 * (theta - theta_p).powi(2),
            Family::Bernoulli => {
                if theta == theta_p {
                    return 0.0;
                }
                theta * (theta / theta_p).ln() + (1.0 - theta) * ((1.0 - theta) / (1.0 - theta_p)).ln()
            }
        }
    }

    /// Log-likelihood of the summarised sample at `θ`.
    #[inline]
    pub fn loglik(&self, stat: &SufficientStat, theta: f64) -> f64 {
        if stat.n == 0 {
            return 0.0;
        }
        let n = stat.n as f64;
        match self.family {
            Family::GaussianMeanUnitVariance => stat.sum * theta - 0.5 * n * theta * theta + stat.log_base,
            Family::Bernoulli => {
                let ones = stat.sum;
                let zeros = n - stat.sum;
                let mut ll = stat.log_base;
                if ones > 0.0 {
                    ll += ones * theta.ln();
                }
                if zeros > 0.0 {
                    ll += zeros * (1.0 - theta).ln();
                }
                ll
            }
        }
    }

    /// Point of `region` maximising the likelihood of a non-empty sample,
    /// with ties between Θ⁰ and Θ¹ resolved toward Θ¹.
    fn argmax(&self, stat: &SufficientStat, region: Region) -> (f64, f64) {
        let mean = stat.sum / stat.n as f64;
        let at = |region: Region| {
            let theta = self.space.interval(region).clamp(mean);
            (theta, self.loglik(stat, theta))
        };
        match region {
            Region::Noise | Region::Signal => at(region),
            Region::Full => {
                let (signal, noise) = (at(Region::Signal), at(Region::Noise));
                if signal.1 >= noise.1 {
                    signal
                } else {
                    noise
                }
            }
        }
    }

    /// Maximum-likelihood estimate over Θ.
    pub fn mle_unrestricted(&self, stat: &SufficientStat) -> Result<f64> {
        if stat.n == 0 {
            return Err(Error::Precondition("the maximum-likelihood estimate needs at least one observation".into()));
        }
        Ok(self.argmax(stat, Region::Full).0)
    }

    /// `sup_{θ ∈ region} log L(θ)`; zero for the empty sample.
    #[inline]
    pub fn sup_loglik(&self, stat: &SufficientStat, region: Region) -> f64 {
        if stat.n == 0 {
            return 0.0;
        }
        self.argmax(stat, region).1
    }

    /// One draw from `f_θ`.
    pub fn sample<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> Result<f64> {
        self.check_param(theta)?;
        Ok(self.sample_unchecked(theta, rng))
    }

    #[inline]
    pub(crate) fn sample_unchecked<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> f64 {
        match self.family {
            Family::GaussianMeanUnitVariance => {
                let z: f64 = rng.sample(StandardNormal);
                theta + z
            }
            Family::Bernoulli => {
                if rng.random::<f64>() < theta {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// A joint parameter `θ = (θ_1, …, θ_K)` with every coordinate in Θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointParameter {
    thetas: Vec<f64>,
    signals: StreamSet,
    constrained: bool,
}

impl JointParameter {
    pub fn new(space: &ParameterSpace, thetas: Vec<f64>) -> Result<Self> {
        if thetas.is_empty() || thetas.len() > StreamSet::CAPACITY {
            return Err(Error::Config(format!(
                "a joint parameter needs between 1 and {} streams, got {}",
                StreamSet::CAPACITY,
                thetas.len()
            )));
        }
        let mut signals = StreamSet::empty();
        for (k, &theta) in thetas.iter().enumerate() {
            match space.classify(theta) {
                Some(Region::Signal) => signals.insert(k),
                Some(_) => {}
                None => {
                    return Err(Error::Config(format!("stream {} parameter {theta} lies outside both regions", k + 1)))
                }
            }
        }
        let shares_one_value = |set: StreamSet| {
            let mut values = set.iter().map(|k| thetas[k]);
            match values.next() {
                Some(first) => values.all(|t| t == first),
                None => true,
            }
        };
        let constrained = shares_one_value(signals) && shares_one_value(signals.complement(thetas.len()));
        Ok(Self { thetas, signals, constrained })
    }

    /// Member of the constrained space: streams in `signals` take `theta1`,
    /// the rest `theta0`.
    pub fn constrained(space: &ParameterSpace, k: usize, signals: StreamSet, theta1: f64, theta0: f64) -> Result<Self> {
        if signals.difference(StreamSet::full(k.min(StreamSet::CAPACITY))) != StreamSet::empty() {
            return Err(Error::Config(format!("signal set {signals} names streams beyond K = {k}")));
        }
        if !signals.is_empty() && !space.signal().contains(theta1) {
            return Err(Error::Config(format!("signal parameter {theta1} is not in the signal region")));
        }
        if signals.len() < k && !space.noise().contains(theta0) {
            return Err(Error::Config(format!("noise parameter {theta0} is not in the noise region")));
        }
        let thetas = (0..k).map(|i| if signals.contains(i) { theta1 } else { theta0 }).collect();
        Self::new(space, thetas)
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// `A(θ)`, the streams whose parameter lies in Θ¹.
    pub fn signal_set(&self) -> StreamSet {
        self.signals
    }

    /// Whether all signals share one value and all noises share another.
    pub fn is_constrained(&self) -> bool {
        self.constrained
    }
}
