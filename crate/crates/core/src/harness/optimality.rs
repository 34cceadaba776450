//! Worst-case demonstration: with `β ≡ 1` and the consistent-alternative attack at
//! `θ = ζ`, poisoned labels are exactly realizable by `w_adv`, so no learner can tell it
//! apart from `w*`.

use serde::Serialize;

use crate::adversary::{required_zeta, AttackSpec, AttackStats, XiStrategy};
use crate::distribution::BetaProfile;
use crate::error::{Error, Result};
use crate::mathcore::linalg::{dist_sq, Vector};
use crate::theory::{self, predict_case1};
use crate::trainer::{run_trial_traces, InitPoint, Problem, StepSize, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimalityReport {
    #[serde(rename = "R")]
    pub trials: usize,
    pub eps: f64,
    pub delta: f64,
    pub gap: f64,
    pub zeta: f64,
    pub eta: f64,
    pub horizon: usize,
    pub adv_mean_dist: f64,
    pub adv_max_dist: f64,
    pub adv_success_fraction: f64,
    pub adv_converged: bool,
    pub star_mean_error: f64,
    pub star_min_error: f64,
    pub star_max_error: f64,
    pub star_band_fraction: f64,
    pub attack: AttackStats,
    /// `ε ≥ ‖w_adv − w*‖` up to the convergence tolerance: no trial lands closer than `gap − ε`.
    pub lower_bound_confirmed: bool,
    pub c_tradeoff: Option<f64>,
    /// `ε = √(ζ²/(δ·c_trade-off))` from the trade-off constant, when it is positive.
    pub eps_tradeoff: Option<f64>,
    /// `(achieved error)²·c_trade-off/ζ²`.
    pub optimality_ratio: Option<f64>,
    /// `r²/c_trade-off`.
    pub ratio_slack: Option<f64>,
    pub clean_mean_dist: f64,
    pub clean_success_fraction: f64,
    pub clean_converged: bool,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Trains `trials` runs against the realizable-for-`w_adv` oracle and `trials` clean runs.
/// Both use the clean-data step size and a horizon long enough for either target.
#[allow(clippy::too_many_arguments)]
pub fn demo_optimality(
    problem: &Problem,
    w_adv: &Vector,
    batch: usize,
    eps: f64,
    delta: f64,
    trials: usize,
    seed: u64,
    w_init: InitPoint,
    mc_samples: usize,
) -> Result<OptimalityReport> {
    if !(eps > 0.0 && delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("need eps > 0 and delta in (0, 1), got {eps}, {delta}")));
    }
    if w_adv.len() != problem.net.r() {
        return Err(Error::shape("demo_optimality", format!("w_adv has length {}, r = {}", w_adv.len(), problem.net.r())));
    }
    let zeta = required_zeta(&problem.net, w_adv, &problem.w_star, &problem.dist)?;
    let gap = w_adv.sub(&problem.w_star)?.norm();
    let attack = AttackSpec {
        theta: zeta,
        profile: BetaProfile::constant(1.0),
        strategy: XiStrategy::ConsistentAlternative { w_adv: w_adv.clone() },
    };
    let clean = AttackSpec::none();

    let mut theory_rng = super::config::theory_stream(seed);
    let clean_consts = problem.constants(&clean, batch, &mut theory_rng, mc_samples)?;
    clean_consts.require_precondition()?;
    let start = crate::trainer::resolve_init(&w_init, problem.net.r(), seed)?;
    let delta1 = start.dist_sq(&problem.w_star)?.max(start.dist_sq(w_adv)?);
    let pred = predict_case1(&clean_consts, None, eps, delta, delta1)?;

    let mut cfg = TrainConfig::new(batch, StepSize::Explicit(pred.eta), eps, delta, seed);
    cfg.t_max = Some(pred.horizon);
    cfg.w_init = InitPoint::Explicit(start);
    cfg.mc_samples = mc_samples;
    cfg.record_every = Some(pred.horizon);

    let (_, attacked) = run_trial_traces(problem, &attack, &cfg, trials)?;
    let (_, honest) = run_trial_traces(problem, &clean, &cfg, trials)?;

    let mut stats = AttackStats::default();
    let mut adv = Vec::with_capacity(trials);
    let mut star = Vec::with_capacity(trials);
    for t in attacked {
        let t = t?;
        stats.merge(&t.stats);
        adv.push(dist_sq(t.final_w.as_slice(), w_adv.as_slice()).sqrt());
        star.push(t.final_dist_sq.sqrt());
    }
    if stats.clamps > 0 {
        return Err(Error::infeasible(
            "clamps == 0",
            format!("{} corruptions exceeded theta = {zeta:e}; the budget does not realize w_adv", stats.clamps),
        ));
    }
    let mut clean_d = Vec::with_capacity(trials);
    for t in honest {
        clean_d.push(t?.final_dist_sq.sqrt());
    }

    let frac = |v: &[f64], ok: &dyn Fn(f64) -> bool| v.iter().filter(|&&d| ok(d)).count() as f64 / v.len() as f64;
    let required = 1.0 - delta - crate::trainer::binomial_slack(delta, trials);
    let adv_success_fraction = frac(&adv, &|d| d <= eps);
    let clean_success_fraction = frac(&clean_d, &|d| d <= eps);
    let star_min_error = star.iter().copied().fold(f64::INFINITY, f64::min);
    let star_mean_error = mean(&star);

    let profile_consts = problem.constants(&attack, batch, &mut super::config::theory_stream(seed), mc_samples)?;
    let c_to = theory::c_tradeoff(&profile_consts).ok().filter(|c| c.is_finite() && *c > 0.0);
    let r = problem.net.r() as f64;
    Ok(OptimalityReport {
        trials,
        eps,
        delta,
        gap,
        zeta,
        eta: pred.eta,
        horizon: pred.horizon,
        adv_mean_dist: mean(&adv),
        adv_max_dist: adv.iter().copied().fold(0.0, f64::max),
        adv_success_fraction,
        adv_converged: adv_success_fraction >= required,
        star_mean_error,
        star_min_error,
        star_max_error: star.iter().copied().fold(0.0, f64::max),
        star_band_fraction: frac(&star, &|d| (d - gap).abs() <= eps),
        attack: stats,
        lower_bound_confirmed: star_min_error >= gap - eps,
        c_tradeoff: c_to,
        eps_tradeoff: c_to.map(|c| (zeta * zeta / (delta * c)).sqrt()),
        optimality_ratio: c_to.filter(|_| zeta > 0.0).map(|c| star_mean_error * star_mean_error * c / (zeta * zeta)),
        ratio_slack: c_to.map(|c| r * r / c),
        clean_mean_dist: mean(&clean_d),
        clean_success_fraction,
        clean_converged: clean_success_fraction >= required,
    })
}
