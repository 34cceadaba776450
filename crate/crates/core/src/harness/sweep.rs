//! Cartesian parameter sweeps over `{b, θ, β, n, γ}`. Every grid point uses the
//! experiment seed; points that fail to build or are infeasible become `feasible=false` rows.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{AutoGamma, EtaSpec, Experiment, ExperimentConfig, SensingConfig, SweepConfig, ThetaSpec};
use crate::distribution::{BetaProfile, InputDistribution};
use crate::error::{Error, Result};
use crate::mathcore::special::gamma_ratio;
use crate::theory::Case;

pub const MAX_GRID_POINTS: usize = 10_000;

pub const CSV_HEADER: &str = "point,b,theta,beta,n,gamma,feasible,case,lambda1,c_tradeoff,theta_star,eta,T_predicted,T_empirical,success_fraction,reason";

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct GridPoint {
    pub b: Option<usize>,
    pub theta: Option<ThetaSpec>,
    pub beta: Option<f64>,
    pub n: Option<usize>,
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: usize,
    pub b: usize,
    pub theta: Option<f64>,
    pub beta: Option<f64>,
    pub n: usize,
    pub gamma: Option<f64>,
    pub feasible: bool,
    pub case: Option<Case>,
    pub lambda1: Option<f64>,
    pub c_tradeoff: Option<f64>,
    pub theta_star: Option<f64>,
    pub eta: Option<f64>,
    pub t_predicted: Option<usize>,
    /// Median first iteration with `‖w − w*‖ ≤ ε` across trials; empty if most trials never got there.
    pub t_empirical: Option<usize>,
    pub success_fraction: Option<f64>,
    pub reason: String,
}

pub fn grid(axes: &SweepConfig) -> Result<Vec<GridPoint>> {
    fn axis<T: Copy>(v: &Option<Vec<T>>) -> Vec<Option<T>> {
        match v {
            Some(vals) => vals.iter().copied().map(Some).collect(),
            None => vec![None],
        }
    }
    let (bs, thetas, betas, ns, gammas) =
        (axis(&axes.b), axis(&axes.theta), axis(&axes.beta), axis(&axes.n), axis(&axes.gamma));
    let size = bs.len() * thetas.len() * betas.len() * ns.len() * gammas.len();
    if size == 0 {
        return Err(Error::config("sweep", "every listed axis needs at least one value"));
    }
    if size > MAX_GRID_POINTS {
        return Err(Error::config("sweep", format!("{size} grid points exceeds the limit of {MAX_GRID_POINTS}")));
    }
    let mut out = Vec::with_capacity(size);
    for &b in &bs {
        for &theta in &thetas {
            for &beta in &betas {
                for &n in &ns {
                    for &gamma in &gammas {
                        out.push(GridPoint { b, theta, beta, n, gamma });
                    }
                }
            }
        }
    }
    Ok(out)
}

fn tradeoff_scale(n: usize) -> Result<f64> {
    gamma_ratio(n as f64 / 2.0, (n as f64 + 1.0) / 2.0)
}

/// The base configuration with one grid point's overrides applied.
pub fn apply_point(base: &ExperimentConfig, p: &GridPoint, hold_gaussian_tradeoff: bool) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    cfg.sweep = None;
    if let Some(b) = p.b {
        cfg.train.batch = b;
    }
    if let Some(theta) = p.theta {
        cfg.attack.theta = theta;
    }
    if let Some(beta) = p.beta {
        cfg.beta = BetaProfile::constant(beta);
    }
    if let Some(gamma) = p.gamma {
        cfg.train.eta = EtaSpec::Auto { auto: AutoGamma { gamma: Some(gamma) } };
    }
    if let Some(n) = p.n {
        let n0 = cfg.net.n;
        if matches!(cfg.net.sensing, SensingConfig::Conv { .. }) {
            return Err(Error::config("sweep.n", "the n axis needs explicit or symmetric sensing"));
        }
        if cfg.net.r == Some(n0) {
            cfg.net.r = Some(n);
        }
        cfg.net.n = n;
        cfg.dist = match cfg.dist {
            InputDistribution::Gaussian { sigma, .. } => {
                let sigma = if hold_gaussian_tradeoff { sigma * tradeoff_scale(n0)? / tradeoff_scale(n)? } else { sigma };
                InputDistribution::Gaussian { sigma, n }
            }
            InputDistribution::SphereUniform { radius, .. } => InputDistribution::SphereUniform { radius, n },
            InputDistribution::BallUniform { radius, .. } => InputDistribution::BallUniform { radius, n },
        };
    }
    Ok(cfg)
}

fn median_hit(hits: &[Option<usize>]) -> Option<usize> {
    let mut sorted: Vec<usize> = hits.iter().map(|h| h.unwrap_or(usize::MAX)).collect();
    sorted.sort_unstable();
    let mid = sorted[(sorted.len() - 1) / 2];
    (mid != usize::MAX).then_some(mid)
}

fn evaluate_point(base: &ExperimentConfig, seed: u64, idx: usize, p: &GridPoint, trials: usize, hold: bool) -> SweepRow {
    let mut row = SweepRow {
        point: idx,
        b: p.b.unwrap_or(base.train.batch),
        theta: match p.theta.unwrap_or(base.attack.theta) {
            ThetaSpec::Value(v) => Some(v),
            ThetaSpec::Relative { .. } => None,
        },
        beta: p.beta.or_else(|| base.beta.constant_value()),
        n: p.n.unwrap_or(base.net.n),
        gamma: p.gamma,
        feasible: false,
        case: None,
        lambda1: None,
        c_tradeoff: None,
        theta_star: None,
        eta: None,
        t_predicted: None,
        t_empirical: None,
        success_fraction: None,
        reason: String::new(),
    };
    let outcome = (|| -> Result<()> {
        let exp = Experiment::build(apply_point(base, p, hold)?, seed)?;
        row.theta = Some(exp.attack.theta);
        let report = exp.theory_report()?;
        row.case = Some(report.case);
        row.lambda1 = Some(report.lambda1);
        row.c_tradeoff = report.c_tradeoff;
        row.theta_star = report.theta_star;
        row.eta = report.eta;
        row.t_predicted = report.T_predicted;
        if !report.feasible {
            row.reason = report.violated_constraints.join("; ");
            return Ok(());
        }
        if let crate::trainer::StepSize::Explicit(eta) = exp.train.step {
            row.eta = Some(eta);
        }
        let summary = exp.run_trials(Some(trials))?;
        row.t_predicted = Some(summary.predicted.horizon);
        row.t_empirical = median_hit(&summary.first_hit);
        row.success_fraction = Some(summary.success_fraction);
        row.feasible = true;
        Ok(())
    })();
    if let Err(e) = outcome {
        row.feasible = false;
        row.reason = e.to_string();
    }
    row
}

/// One row per grid point, in grid order.
pub fn sweep(base: &ExperimentConfig, seed: u64, trials_override: Option<usize>) -> Result<Vec<SweepRow>> {
    let axes = base.sweep.clone().ok_or_else(|| Error::config("sweep", "the config has no sweep section"))?;
    let points = grid(&axes)?;
    let trials = trials_override.or(axes.trials).unwrap_or(base.trials.trials);
    if trials == 0 {
        return Err(Error::InvalidDimension("trial count R must be >= 1".into()));
    }
    let hold = axes.hold_gaussian_tradeoff;
    Ok(points
        .par_iter()
        .enumerate()
        .map(|(i, p)| evaluate_point(base, seed, i, p, trials, hold))
        .collect())
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, |x| x.to_string())
}

fn opt_f(v: &Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:e}"))
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let case = r.case.map_or("", |c| match c {
            Case::I => "I",
            Case::II => "II",
        });
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.point,
            r.b,
            opt_f(&r.theta),
            opt_f(&r.beta),
            r.n,
            opt_f(&r.gamma),
            r.feasible,
            case,
            opt_f(&r.lambda1),
            opt_f(&r.c_tradeoff),
            opt_f(&r.theta_star),
            opt_f(&r.eta),
            opt(&r.t_predicted),
            opt(&r.t_empirical),
            opt_f(&r.success_fraction),
            csv_text(&r.reason),
        );
    }
    out
}
