//! JSON experiment files.

use std::fs;
use std::path::{Path, PathBuf};

use seqdetect::engine::{InitPolicy, TestKind, Thresholds, DEFAULT_N_MAX};
use seqdetect::models::{Family, JointParameter, ParameterSpace, StreamModel};
use seqdetect::montecarlo::{self, ExperimentConfig};
use seqdetect::StreamSet;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: String,
    pub model: ModelSection,
    pub truth: TruthSection,
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Gaussian,
    Bernoulli,
}

/// Either `delta` (Gaussian only) or explicit `noise`/`signal` bounds.
/// A `null` bound is an infinite end.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: FamilyName,
    pub delta: Option<f64>,
    pub noise: Option<[Option<f64>; 2]>,
    pub signal: Option<[Option<f64>; 2]>,
}

/// Signal streams are listed 1-based.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    pub k: usize,
    pub signals: Vec<usize>,
    pub theta1: f64,
    pub theta0: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdPair {
    pub log_a: f64,
    pub log_b: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelPair {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_kinds")]
    pub kinds: Vec<String>,
    pub thresholds: Option<Vec<ThresholdPair>>,
    /// Shorthand for `log_a = log_b = t`.
    pub equal_thresholds: Option<Vec<f64>>,
    pub levels: Option<Vec<LevelPair>>,
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    pub n_max: Option<u64>,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Table,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: default_directory(), formats: default_formats() }
    }
}

fn default_kinds() -> Vec<String> {
    vec!["constrained".into(), "unconstrained".into()]
}

fn default_directory() -> PathBuf {
    PathBuf::from(".")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Table]
}

/// A parsed and checked config ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Experiment {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn bound(x: Option<f64>, missing: f64) -> f64 {
    x.unwrap_or(missing)
}

fn model_of(m: &ModelSection) -> Result<StreamModel, CliError> {
    let family = match m.family {
        FamilyName::Gaussian => Family::GaussianMeanUnitVariance,
        FamilyName::Bernoulli => Family::Bernoulli,
    };
    let space = match (m.delta, m.noise, m.signal) {
        (Some(delta), None, None) => {
            if family != Family::GaussianMeanUnitVariance {
                return Err(bad("model.delta is only defined for the gaussian family"));
            }
            ParameterSpace::symmetric(delta)?
        }
        (None, Some(n), Some(s)) => ParameterSpace::new(
            bound(n[0], f64::NEG_INFINITY),
            bound(n[1], f64::INFINITY),
            bound(s[0], f64::NEG_INFINITY),
            bound(s[1], f64::INFINITY),
        )?,
        _ => return Err(bad("model needs either delta or both noise and signal bounds")),
    };
    Ok(StreamModel::new(family, space)?)
}

fn truth_of(t: &TruthSection, model: &StreamModel) -> Result<JointParameter, CliError> {
    if t.k == 0 || t.k > StreamSet::CAPACITY {
        return Err(bad(format!("truth.k must be in 1..={}", StreamSet::CAPACITY)));
    }
    let mut signals = StreamSet::empty();
    for &s in &t.signals {
        if s == 0 || s > t.k {
            return Err(bad(format!("truth.signals entry {s} is outside 1..={}", t.k)));
        }
        signals.insert(s - 1);
    }
    JointParameter::constrained(model.space(), t.k, signals, t.theta1, t.theta0)
        .map_err(|e| bad(format!("truth does not fit the model: {e}")))
}

fn thresholds_of(r: &RunSection) -> Result<Vec<Thresholds>, CliError> {
    let out = match (&r.thresholds, &r.equal_thresholds, &r.levels) {
        (Some(list), None, None) => {
            list.iter().map(|p| Thresholds::new(p.log_a, p.log_b)).collect::<Result<Vec<_>, _>>()?
        }
        (None, Some(list), None) => list.iter().map(|&t| Thresholds::equal(t)).collect::<Result<Vec<_>, _>>()?,
        (None, None, Some(list)) => {
            list.iter().map(|p| montecarlo::thresholds_from_levels(p.alpha, p.beta)).collect::<Result<Vec<_>, _>>()?
        }
        _ => return Err(bad("run needs exactly one of thresholds, equal_thresholds or levels")),
    };
    if out.is_empty() {
        return Err(bad("run lists no thresholds"));
    }
    Ok(out)
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| bad(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn into_experiment(self) -> Result<Experiment, CliError> {
        if self.experiment.is_empty() || self.experiment.contains(['/', '\\']) {
            return Err(bad("experiment name must be non-empty and contain no path separators"));
        }
        let model = model_of(&self.model)?;
        let theta = truth_of(&self.truth, &model)?;
        let kinds = self.run.kinds.iter().map(|k| k.parse::<TestKind>()).collect::<Result<Vec<_>, _>>()?;
        let thresholds = thresholds_of(&self.run)?;
        let config = ExperimentConfig {
            model,
            theta,
            kinds,
            thresholds,
            trials: self.run.trials,
            base_seed: self.run.seed,
            n_max: self.run.n_max.unwrap_or(DEFAULT_N_MAX),
            init: InitPolicy::default(),
        };
        config.validate()?;
        if self.output.formats.is_empty() {
            return Err(bad("output.formats is empty"));
        }
        Ok(Experiment { name: self.experiment, config, out_dir: self.output.directory, formats: self.output.formats })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "experiment": "t",
        "model": {"family": "gaussian", "delta": 0.1},
        "truth": {"k": 2, "signals": [1], "theta1": 0.5, "theta0": -0.5},
        "run": {"equal_thresholds": [2, 5], "trials": 10, "seed": 3}
    }"#;

    #[test]
    fn parses_minimal_config() {
        let e = ConfigFile::parse(BASE).unwrap().into_experiment().unwrap();
        assert_eq!(e.config.theta.thetas(), &[0.5, -0.5]);
        assert_eq!(e.config.thresholds.len(), 2);
        assert_eq!(e.config.kinds, vec![TestKind::Constrained, TestKind::Unconstrained]);
        assert_eq!(e.config.n_max, DEFAULT_N_MAX);
    }

    #[test]
    fn explicit_bounds_with_nulls() {
        let text = BASE.replace(r#""delta": 0.1"#, r#""noise": [null, -0.1], "signal": [0.1, null]"#);
        let e = ConfigFile::parse(&text).unwrap().into_experiment().unwrap();
        assert_eq!(e.config.model, StreamModel::gaussian(0.1).unwrap());
    }

    #[test]
    fn rejects_unknown_keys_and_mismatches() {
        let unknown = BASE.replace(r#""trials": 10"#, r#""trials": 10, "speed": 1"#);
        assert!(matches!(ConfigFile::parse(&unknown), Err(CliError::Config(_))));
        let off = BASE.replace("0.5, \"theta0\"", "0.05, \"theta0\"");
        assert!(matches!(ConfigFile::parse(&off).unwrap().into_experiment(), Err(CliError::Config(_))));
        let both = BASE.replace(
            r#""equal_thresholds": [2, 5]"#,
            r#""equal_thresholds": [2], "levels": [{"alpha": 0.1, "beta": 0.1}]"#,
        );
        assert!(ConfigFile::parse(&both).unwrap().into_experiment().is_err());
        let stream = BASE.replace(r#""signals": [1]"#, r#""signals": [3]"#);
        assert!(ConfigFile::parse(&stream).unwrap().into_experiment().is_err());
    }

    #[test]
    fn levels_become_thresholds() {
        let text = BASE.replace(r#""equal_thresholds": [2, 5]"#, r#""levels": [{"alpha": 0.05, "beta": 0.05}]"#);
        let e = ConfigFile::parse(&text).unwrap().into_experiment().unwrap();
        assert!((e.config.thresholds[0].log_a - 20f64.ln()).abs() < 1e-12);
    }
}
