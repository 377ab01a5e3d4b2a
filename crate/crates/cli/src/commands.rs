//! The four subcommands.

use seqdetect::engine::TestKind;
use seqdetect::geometry::{self, InfoConstants};
use seqdetect::models::{Family, Interval};
use seqdetect::montecarlo::{self, CellSummary, ExperimentConfig};
use seqdetect::validation::{self, Scale};

use crate::config::{Experiment, Format};
use crate::output::{float, short, Csv};
use crate::CliError;

pub const SIMULATE_HEADER: [&str; 12] = [
    "kind",
    "log_a",
    "log_b",
    "trials",
    "ess",
    "ess_se",
    "fwer1",
    "fwer1_ci",
    "fwer2",
    "fwer2_ci",
    "truncated",
    "approx_ess",
];
pub const FIGURE_HEADER: [&str; 4] = ["series", "log_threshold", "value", "se"];
pub const INFO_HEADER: [&str; 7] =
    ["log_a", "log_b", "alpha", "beta", "lower_bound", "constrained_approx", "unconstrained_approx"];

fn interval(i: Interval) -> String {
    let open = if i.lo.is_finite() { "[" } else { "(" };
    let close = if i.hi.is_finite() { "]" } else { ")" };
    format!("{open}{}, {}{close}", short(i.lo), short(i.hi))
}

fn level(log_threshold: f64) -> f64 {
    (-log_threshold).exp().min(1.0)
}

fn emit(exp: &Experiment, csv: &Csv, file: &str) -> Result<(), CliError> {
    if exp.wants(Format::Table) {
        print!("{}", csv.table());
    }
    if exp.wants(Format::Csv) {
        let path = csv.write(&exp.out_dir, &format!("{}_{file}", exp.name))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn warn(cells: &[CellSummary]) {
    for c in cells.iter().filter(|c| c.truncated > 0) {
        eprintln!(
            "note: {} (log a = {}, log b = {}): {} of {} trials truncated and excluded from ESS",
            c.kind.as_str(),
            c.thresholds.log_a,
            c.thresholds.log_b,
            c.truncated,
            c.trials
        );
    }
    let thin = cells.iter().filter(|c| !c.fwer1_certified() || !c.fwer2_certified()).count();
    if thin > 0 {
        eprintln!(
            "note: {thin} of {} cells saw fewer than {} errors of some type; their FWER intervals are not informative",
            cells.len(),
            montecarlo::MIN_ERRORS_FOR_CI
        );
    }
}

pub fn info(exp: &Experiment) -> Result<(), CliError> {
    let cfg = &exp.config;
    let space = cfg.model.space();
    let c: InfoConstants = geometry::info_constants(&cfg.model, &cfg.theta)?;
    let family = match cfg.model.family() {
        Family::GaussianMeanUnitVariance => "gaussian (unit variance)",
        Family::Bernoulli => "bernoulli",
    };
    let thetas: Vec<String> = cfg.theta.thetas().iter().map(|&t| short(t)).collect();
    println!("experiment {}", exp.name);
    println!("model      {family}, noise {}, signal {}", interval(space.noise()), interval(space.signal()));
    println!("truth      theta = ({}), signals {}", thetas.join(", "), cfg.theta.signal_set());
    println!("I0  = {}", short(c.i0));
    println!("I1  = {}", short(c.i1));
    println!("I0~ = {}", short(c.i0_tilde));
    println!("I1~ = {}", short(c.i1_tilde));

    let mut csv = Csv::new(&INFO_HEADER);
    for th in &cfg.thresholds {
        let (alpha, beta) = (level(th.log_a), level(th.log_b));
        let bound = if alpha + beta < 0.5 { Some(geometry::lower_bound(&c, alpha, beta)?) } else { None };
        let con = geometry::asymptotic_from_log_thresholds(&c.for_kind(TestKind::Constrained), th.log_a, th.log_b);
        let uncon = geometry::asymptotic_from_log_thresholds(&c.for_kind(TestKind::Unconstrained), th.log_a, th.log_b);
        match bound {
            Some(b) => println!(
                "log a = {}, log b = {}: lower bound {}, approximation {} (constrained), {} (unconstrained)",
                short(th.log_a),
                short(th.log_b),
                short(b),
                short(con),
                short(uncon)
            ),
            None => println!(
                "log a = {}, log b = {}: alpha + beta = {} >= 1/2 is outside the lower-bound hypothesis, no bound; approximation {} (constrained), {} (unconstrained)",
                short(th.log_a),
                short(th.log_b),
                short(alpha + beta),
                short(con),
                short(uncon)
            ),
        }
        csv.push(vec![
            float(th.log_a),
            float(th.log_b),
            float(alpha),
            float(beta),
            bound.map(float).unwrap_or_default(),
            float(con),
            float(uncon),
        ]);
    }
    if exp.wants(Format::Csv) {
        let path = csv.write(&exp.out_dir, &format!("{}_info.csv", exp.name))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

pub fn simulate(exp: &Experiment) -> Result<(), CliError> {
    let cells = montecarlo::run_experiment(&exp.config)?;
    let mut csv = Csv::new(&SIMULATE_HEADER);
    for c in &cells {
        csv.push(vec![
            c.kind.as_str().to_string(),
            float(c.thresholds.log_a),
            float(c.thresholds.log_b),
            c.trials.to_string(),
            float(c.ess),
            float(c.ess_se),
            float(c.fwer1),
            float(c.fwer1_ci),
            float(c.fwer2),
            float(c.fwer2_ci),
            c.truncated.to_string(),
            float(c.approx_ess),
        ]);
    }
    warn(&cells);
    emit(exp, &csv, "simulate.csv")
}

pub fn figure(exp: &Experiment) -> Result<(), CliError> {
    if let Some(th) = exp.config.thresholds.iter().find(|t| t.log_a != t.log_b) {
        return Err(CliError::Config(format!(
            "figure needs an equal-threshold sweep, got log a = {} and log b = {}",
            th.log_a, th.log_b
        )));
    }
    let cfg = ExperimentConfig { kinds: vec![TestKind::Constrained, TestKind::Unconstrained], ..exp.config.clone() };
    let cells = montecarlo::run_experiment(&cfg)?;
    let mut csv = Csv::new(&FIGURE_HEADER);
    for c in &cells {
        let t = float(c.thresholds.log_a);
        let kind = c.kind.as_str();
        csv.push(vec![format!("{kind}_ess"), t.clone(), float(c.ess), float(c.ess_se)]);
        csv.push(vec![format!("{kind}_approx"), t, float(c.approx_ess), float(0.0)]);
    }
    warn(&cells);
    emit(exp, &csv, "figure.csv")
}

/// Returns whether every check passed.
pub fn validate(exp: &Experiment, quick: bool) -> Result<bool, CliError> {
    let scale = if quick { Scale::Quick } else { Scale::Full };
    let checks = validation::run_validation(&exp.config.model, &exp.config.theta, scale, exp.config.base_seed)?;
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", checks.len());
    Ok(failed == 0)
}
