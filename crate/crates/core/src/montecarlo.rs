//! Monte Carlo estimation of expected sample size and familywise error rates.
//!
//! Every trial draws from its own ChaCha8 stream seeded by
//! [`derive_trial_seed`], so any single trial can be replayed in isolation
//! and results do not depend on scheduling. Trials run on the ambient rayon
//! pool; aggregation happens afterwards in trial order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{Decision, EngineState, InitPolicy, TestKind, Thresholds, DEFAULT_N_MAX};
use crate::error::{Error, Result};
use crate::geometry::{self, InfoConstants};
use crate::models::{JointParameter, StreamModel};
use crate::StreamSet;

/// Two-sided 95% normal quantile used for rate half-widths.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Below this many observed errors a rate interval is flagged as uncertified.
pub const MIN_ERRORS_FOR_CI: u64 = 10;

/// Default logarithmic threshold sweep, `log a = log b`.
pub const FIGURE_SWEEP: [f64; 6] = [2.0, 5.0, 10.0, 20.0, 50.0, 100.0];
pub const DESK_SWEEP: [f64; 4] = [2.0, 5.0, 10.0, 20.0];

const MAX_TRIALS: u64 = 1 << 40;

/// `log a = −log α`, `log b = −log β`.
pub fn thresholds_from_levels(alpha: f64, beta: f64) -> Result<Thresholds> {
    if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("error levels must lie in (0, 1), got ({alpha}, {beta})")));
    }
    Thresholds::new(-alpha.ln(), -beta.ln())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one trial. For a fixed base seed the map is injective over
/// `cell < 2^24`, `trial < 2^40`: the pair is packed into one word, then
/// passed through an xor and the splitmix64 finaliser, both bijections.
pub fn derive_trial_seed(base_seed: u64, cell_index: u32, trial_index: u64) -> u64 {
    debug_assert!(cell_index < 1 << 24 && trial_index < MAX_TRIALS);
    let packed = (u64::from(cell_index) << 40) | trial_index;
    splitmix64(splitmix64(base_seed) ^ packed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: StreamModel,
    pub theta: JointParameter,
    pub kinds: Vec<TestKind>,
    pub thresholds: Vec<Thresholds>,
    pub trials: u64,
    pub base_seed: u64,
    pub n_max: u64,
    pub init: InitPolicy,
}

impl ExperimentConfig {
    /// A config with the default horizon and initialisation.
    pub fn new(
        model: StreamModel,
        theta: JointParameter,
        kinds: Vec<TestKind>,
        thresholds: Vec<Thresholds>,
        trials: u64,
        base_seed: u64,
    ) -> Self {
        Self { model, theta, kinds, thresholds, trials, base_seed, n_max: DEFAULT_N_MAX, init: InitPolicy::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 || self.trials >= MAX_TRIALS {
            return Err(Error::Config(format!("trials must be in [1, 2^40), got {}", self.trials)));
        }
        if self.thresholds.is_empty() {
            return Err(Error::Config("the threshold grid is empty".into()));
        }
        if self.thresholds.len() >= 1 << 22 {
            return Err(Error::Config("the threshold grid is too large".into()));
        }
        if self.kinds.is_empty() {
            return Err(Error::Config("no test kinds requested".into()));
        }
        if self.n_max < 1 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        if self.kinds.contains(&TestKind::Constrained) && !self.theta.is_constrained() {
            return Err(Error::Config(
                "the constrained test needs a truth with one shared signal and one shared noise value".into(),
            ));
        }
        for &t in self.theta.thetas() {
            if !self.model.space().contains(t) {
                return Err(Error::Config(format!("true parameter {t} lies outside the model's regions")));
            }
        }
        // Surface initialisation errors before any trial runs.
        EngineState::homogeneous(self.model, self.theta.len(), &self.init)?;
        Ok(())
    }
}

/// Results for one `(thresholds, kind)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub kind: TestKind,
    pub thresholds: Thresholds,
    pub trials: u64,
    /// Mean of `T̂` over non-truncated trials.
    pub ess: f64,
    pub ess_se: f64,
    /// `P(D̂ ∖ A(θ) ≠ ∅)`.
    pub fwer1: f64,
    pub fwer1_ci: f64,
    pub fwer1_errors: u64,
    /// `P(A(θ) ∖ D̂ ≠ ∅)`.
    pub fwer2: f64,
    pub fwer2_ci: f64,
    pub fwer2_errors: u64,
    pub truncated: u64,
    /// `max{log b / I⁰, log a / I¹}` with the constants of this kind.
    pub approx_ess: f64,
    /// Universal lower bound at `α = e^{−log a}`, `β = e^{−log b}` when
    /// `α + β < 1/2` and the truth is constrained.
    pub lower_bound: Option<f64>,
}

impl CellSummary {
    pub fn fwer1_certified(&self) -> bool {
        self.fwer1_errors >= MIN_ERRORS_FOR_CI
    }

    pub fn fwer2_certified(&self) -> bool {
        self.fwer2_errors >= MIN_ERRORS_FOR_CI
    }

    /// Non-fatal caveats worth showing to a user.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let label =
            format!("{} (log a = {}, log b = {})", self.kind.as_str(), self.thresholds.log_a, self.thresholds.log_b);
        if self.truncated > 0 {
            out.push(format!("{label}: {} of {} trials truncated and excluded from ESS", self.truncated, self.trials));
        }
        if !self.fwer1_certified() {
            out.push(format!("{label}: type-I rate too small to certify ({} errors)", self.fwer1_errors));
        }
        if !self.fwer2_certified() {
            out.push(format!("{label}: type-II rate too small to certify ({} errors)", self.fwer2_errors));
        }
        out
    }
}

/// Per-trial record kept for aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub decision: Decision,
    pub type1: bool,
    pub type2: bool,
}

fn classify(decision: Decision, truth: StreamSet) -> TrialOutcome {
    TrialOutcome {
        decision,
        type1: !decision.selected.difference(truth).is_empty(),
        type2: !truth.difference(decision.selected).is_empty(),
    }
}

/// Stable cell numbering: two slots per threshold, one per kind, so adding
/// or dropping a kind leaves other cells' seeds unchanged.
pub fn cell_index(threshold_index: usize, kind: TestKind) -> u32 {
    let slot = match kind {
        TestKind::Constrained => 0,
        TestKind::Unconstrained => 1,
    };
    (threshold_index * 2 + slot) as u32
}

/// Replays one trial of a cell.
pub fn run_trial(
    config: &ExperimentConfig,
    cell: u32,
    kind: TestKind,
    thresholds: &Thresholds,
    trial: u64,
) -> Result<TrialOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_trial_seed(config.base_seed, cell, trial));
    let mut state = EngineState::homogeneous(config.model, config.theta.len(), &config.init)?;
    let (decision, _) = state.run(&config.theta, thresholds, kind, &mut rng, config.n_max)?;
    Ok(classify(decision, config.theta.signal_set()))
}

fn rate_half_width(p: f64, n: u64) -> f64 {
    Z_95 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Aggregates outcomes (in trial order) into a cell summary.
pub fn summarize(
    kind: TestKind,
    thresholds: Thresholds,
    outcomes: &[TrialOutcome],
    constants: &InfoConstants,
    lower_bound: Option<f64>,
) -> CellSummary {
    let trials = outcomes.len() as u64;
    let completed: Vec<f64> =
        outcomes.iter().filter(|o| !o.decision.truncated).map(|o| o.decision.stopped_at as f64).collect();
    let m = completed.len() as f64;
    let ess = if completed.is_empty() { f64::NAN } else { completed.iter().sum::<f64>() / m };
    let ess_se = if completed.len() < 2 {
        0.0
    } else {
        let var = completed.iter().map(|t| (t - ess).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    };
    let fwer1_errors = outcomes.iter().filter(|o| o.type1).count() as u64;
    let fwer2_errors = outcomes.iter().filter(|o| o.type2).count() as u64;
    let fwer1 = fwer1_errors as f64 / trials as f64;
    let fwer2 = fwer2_errors as f64 / trials as f64;
    let leading = constants.for_kind(kind);
    CellSummary {
        kind,
        thresholds,
        trials,
        ess,
        ess_se,
        fwer1,
        fwer1_ci: rate_half_width(fwer1, trials),
        fwer1_errors,
        fwer2,
        fwer2_ci: rate_half_width(fwer2, trials),
        fwer2_errors,
        truncated: outcomes.iter().filter(|o| o.decision.truncated).count() as u64,
        approx_ess: geometry::asymptotic_from_log_thresholds(&leading, thresholds.log_a, thresholds.log_b),
        lower_bound,
    }
}

fn constants_for(config: &ExperimentConfig) -> Result<InfoConstants> {
    if config.theta.is_constrained() && config.theta.len() <= geometry::MAX_ENUMERATED_STREAMS {
        geometry::info_constants(&config.model, &config.theta)
    } else {
        let (i0_tilde, i1_tilde) = geometry::unconstrained_constants(&config.model, &config.theta)?;
        Ok(InfoConstants { i0: f64::NAN, i1: f64::NAN, i0_tilde, i1_tilde })
    }
}

fn cell_lower_bound(constants: &InfoConstants, th: &Thresholds) -> Option<f64> {
    let (alpha, beta) = ((-th.log_a).exp().min(1.0), (-th.log_b).exp().min(1.0));
    if constants.i0.is_nan() {
        return None;
    }
    geometry::lower_bound(constants, alpha, beta).ok()
}

/// Runs one cell of an experiment.
pub fn run_cell(config: &ExperimentConfig, threshold_index: usize, kind: TestKind) -> Result<CellSummary> {
    config.validate()?;
    let constants = constants_for(config)?;
    let thresholds = *config
        .thresholds
        .get(threshold_index)
        .ok_or_else(|| Error::Config(format!("no threshold at index {threshold_index}")))?;
    let cell = cell_index(threshold_index, kind);
    let outcomes = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, cell, kind, &thresholds, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(kind, thresholds, &outcomes, &constants, cell_lower_bound(&constants, &thresholds)))
}

/// Every `(threshold, kind)` cell, thresholds outermost, in config order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<CellSummary>> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.thresholds.len() * config.kinds.len());
    for ti in 0..config.thresholds.len() {
        for &kind in &config.kinds {
            out.push(run_cell(config, ti, kind)?);
        }
    }
    Ok(out)
}
