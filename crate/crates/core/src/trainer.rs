//! The mini-batched Tron iteration `w ← w + η·M·(1/b)Σ(y_i − f_w(x_i))x_i`, run against
//! a label oracle, plus repeated-trial aggregation.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{AdversarialOracle, AttackSpec, AttackStats, LabelOracle, ReplayContext};
use crate::distribution::{InputDistribution, DEFAULT_MC_SAMPLES};
use crate::error::{Error, Result};
use crate::mathcore::linalg::{dist_sq, Matrix, Vector};
use crate::mathcore::rng::streams;
use crate::mathcore::RngStream;
use crate::model::{NetSpec, Predictor};
use crate::theory::{self, Case, CasePrediction, TheoryConstants};

pub const DIVERGENCE_FACTOR: f64 = 1e12;

/// `out = M·(1/b)Σ(y_i − f(x_i))x_i` for row-major `xs`; `acc` is an n-length scratch buffer.
pub(crate) fn tron_direction(m: &Matrix, pred: &Predictor, xs: &[f64], ys: &[f64], acc: &mut [f64], out: &mut [f64]) {
    let n = acc.len();
    acc.iter_mut().for_each(|a| *a = 0.0);
    for (x, y) in xs.chunks_exact(n).zip(ys) {
        let res = y - pred.eval_slice(x);
        for (a, xi) in acc.iter_mut().zip(x) {
            *a += res * xi;
        }
    }
    let inv_b = 1.0 / ys.len() as f64;
    acc.iter_mut().for_each(|a| *a *= inv_b);
    m.matvec_into(acc, out);
}

/// The Tron-gradient of one labelled batch.
pub fn tron_gradient(m: &Matrix, xs: &[Vector], ys: &[f64], net: &NetSpec, w: &Vector) -> Result<Vector> {
    if xs.is_empty() {
        return Err(Error::InvalidDimension("tron_gradient needs a non-empty batch".into()));
    }
    if xs.len() != ys.len() {
        return Err(Error::shape("tron_gradient", format!("{} inputs but {} labels", xs.len(), ys.len())));
    }
    if m.shape() != (net.r(), net.n()) {
        return Err(Error::shape("tron_gradient", format!("M is {:?}, net is {}x{}", m.shape(), net.r(), net.n())));
    }
    let mut flat = Vec::with_capacity(xs.len() * net.n());
    for x in xs {
        if x.len() != net.n() {
            return Err(Error::shape("tron_gradient", format!("input length {} != n={}", x.len(), net.n())));
        }
        flat.extend_from_slice(x.as_slice());
    }
    if !flat.iter().chain(ys).all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite value in batch".into()));
    }
    let pred = net.predictor(w)?;
    let mut acc = vec![0.0; net.n()];
    let mut out = vec![0.0; net.r()];
    tron_direction(m, &pred, &flat, ys, &mut acc, &mut out);
    Ok(Vector::from_vec(out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSize {
    Explicit(f64),
    /// Theorem step size; `gamma = None` selects the default margin over the lower bound.
    Auto { gamma: Option<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitPoint {
    Zero,
    Explicit(Vector),
    RandomSphere { radius: f64 },
}

impl Default for InitPoint {
    fn default() -> Self {
        InitPoint::RandomSphere { radius: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch: usize,
    pub step: StepSize,
    /// Iteration count; `None` runs the predicted horizon.
    pub t_max: Option<usize>,
    pub seed: u64,
    pub record_every: Option<usize>,
    pub eps: f64,
    pub delta: f64,
    pub w_init: InitPoint,
    pub early_stop: bool,
    pub mc_samples: usize,
}

impl TrainConfig {
    pub fn new(batch: usize, step: StepSize, eps: f64, delta: f64, seed: u64) -> Self {
        TrainConfig {
            batch,
            step,
            t_max: None,
            seed,
            record_every: None,
            eps,
            delta,
            w_init: InitPoint::default(),
            early_stop: false,
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::InvalidDimension("batch size must be >= 1".into()));
        }
        if let StepSize::Explicit(eta) = self.step {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::Domain(format!("eta must be positive and finite, got {eta}")));
            }
        }
        if self.t_max == Some(0) {
            return Err(Error::InvalidDimension("t_max must be >= 1".into()));
        }
        if self.record_every == Some(0) {
            return Err(Error::InvalidDimension("record_every must be >= 1".into()));
        }
        if !(self.eps >= 0.0) || !(self.delta > 0.0) {
            return Err(Error::Domain(format!("need eps >= 0 and delta > 0 (got {}, {})", self.eps, self.delta)));
        }
        Ok(())
    }
}

/// Everything fixed about a learning problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub net: NetSpec,
    pub m: Matrix,
    pub dist: InputDistribution,
    pub w_star: Vector,
}

impl Problem {
    pub fn new(net: NetSpec, m: Matrix, dist: InputDistribution, w_star: Vector) -> Result<Self> {
        dist.validate()?;
        if m.shape() != (net.r(), net.n()) {
            return Err(Error::shape("problem", format!("M is {:?}, net is {}x{}", m.shape(), net.r(), net.n())));
        }
        m.ensure_finite()?;
        if dist.dim() != net.n() {
            return Err(Error::shape("problem", format!("distribution n={} but net n={}", dist.dim(), net.n())));
        }
        if w_star.len() != net.r() {
            return Err(Error::shape("problem", format!("w_star length {} != r={}", w_star.len(), net.r())));
        }
        if !w_star.is_finite() {
            return Err(Error::Numeric("w_star has non-finite entries".into()));
        }
        Ok(Problem { net, m, dist, w_star })
    }

    pub fn constants(&self, attack: &AttackSpec, batch: usize, rng: &mut RngStream, mc: usize) -> Result<TheoryConstants> {
        theory::evaluate_constants(&self.net, &self.m, &self.dist, &attack.profile, batch, rng, mc)
    }
}

pub fn resolve_init(init: &InitPoint, r: usize, seed: u64) -> Result<Vector> {
    match init {
        InitPoint::Zero => Ok(Vector::zeros(r)),
        InitPoint::Explicit(w) => {
            if w.len() != r {
                return Err(Error::shape("w_init", format!("length {} != r={r}", w.len())));
            }
            if !w.is_finite() {
                return Err(Error::Numeric("w_init has non-finite entries".into()));
            }
            Ok(w.clone())
        }
        InitPoint::RandomSphere { radius } => {
            if !(*radius >= 0.0 && radius.is_finite()) {
                return Err(Error::Domain(format!("init radius must be finite and >= 0, got {radius}")));
            }
            let dist = InputDistribution::SphereUniform { radius: 1.0, n: r };
            let mut rng = RngStream::new(seed).derive(streams::INIT);
            Ok(dist.sample(&mut rng).scale(*radius))
        }
    }
}

/// Resolved step size, horizon and start point.
#[derive(Clone, Debug, Serialize)]
pub struct RunPlan {
    pub eta: f64,
    pub horizon: usize,
    pub record_every: usize,
    pub w_init: Vector,
    pub delta1: f64,
    pub prediction: Option<CasePrediction>,
}

pub fn plan(problem: &Problem, attack: &AttackSpec, cfg: &TrainConfig) -> Result<RunPlan> {
    cfg.validate()?;
    attack.validate(&problem.net)?;
    let w_init = resolve_init(&cfg.w_init, problem.net.r(), cfg.seed)?;
    let delta1 = w_init.dist_sq(&problem.w_star)?;
    let needs_theory = matches!(cfg.step, StepSize::Auto { .. }) || cfg.t_max.is_none();
    let prediction = if needs_theory {
        let mut rng = RngStream::new(cfg.seed).derive(streams::THEORY);
        let consts = problem.constants(attack, cfg.batch, &mut rng, cfg.mc_samples)?;
        consts.require_precondition()?;
        let gamma = match cfg.step {
            StepSize::Auto { gamma } => gamma,
            StepSize::Explicit(_) => None,
        };
        Some(theory::predict(&consts, attack.theta, gamma, cfg.eps, cfg.delta, delta1)?)
    } else {
        None
    };
    let eta = match (&cfg.step, &prediction) {
        (StepSize::Explicit(eta), _) => *eta,
        (StepSize::Auto { .. }, Some(p)) => p.eta,
        (StepSize::Auto { .. }, None) => unreachable!("auto step always has a prediction"),
    };
    let horizon = match (cfg.t_max, &prediction) {
        (Some(t), _) => t,
        (None, Some(p)) => p.horizon,
        (None, None) => unreachable!("missing horizon always has a prediction"),
    };
    let record_every = cfg.record_every.unwrap_or((horizon / 1000).max(1));
    Ok(RunPlan { eta, horizon, record_every, w_init, delta1, prediction })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: usize,
    pub dist_sq: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub final_w: Vector,
    pub final_dist_sq: f64,
    /// Iterations actually executed.
    pub steps: usize,
    /// First `t` with `‖w^(t) − w*‖² ≤ ε²`.
    pub first_hit: Option<usize>,
    pub early_stopped: bool,
    pub stats: AttackStats,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl Trace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,dist_sq,grad_norm\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:e},{:e}", r.t, r.dist_sq, r.grad_norm);
        }
        out
    }
}

/// Loop settings that do not depend on the problem's hidden optimum.
#[derive(Clone, Debug)]
pub struct LoopSettings {
    pub eta: f64,
    pub horizon: usize,
    pub record_every: usize,
    pub eps: f64,
    pub early_stop: bool,
}

/// Runs the iteration for `settings.horizon` steps. The learner sees only the oracle's labels;
/// `monitor` maps the current filter to its squared distance from the optimum for the trace.
pub fn run_with_oracle(
    net: &NetSpec,
    m: &Matrix,
    dist: &InputDistribution,
    w_init: &Vector,
    settings: &LoopSettings,
    batch: usize,
    data: &mut RngStream,
    oracle: &mut dyn LabelOracle,
    monitor: &mut dyn FnMut(&[f64]) -> f64,
) -> Result<Trace> {
    let started = Instant::now();
    let (n, r) = (net.n(), net.r());
    let mut w = w_init.as_slice().to_vec();
    let mut pred = net.predictor(w_init)?;
    let mut xs = vec![0.0; batch * n];
    let mut ys = vec![0.0; batch];
    let mut acc = vec![0.0; n];
    let mut g = vec![0.0; r];
    let initial = monitor(&w);
    let threshold = if initial > 0.0 { DIVERGENCE_FACTOR * initial } else { DIVERGENCE_FACTOR };
    let hit_level = settings.eps * settings.eps;
    let stop_level = 0.25 * hit_level;
    let mut rows = Vec::with_capacity(settings.horizon / settings.record_every + 2);
    let mut first_hit = None;
    let mut early_stopped = false;
    let mut steps = 0;
    let mut last = initial;
    for t in 1..=settings.horizon {
        for x in xs.chunks_exact_mut(n) {
            dist.sample_into(data, x);
        }
        oracle.answer_batch(&xs, &mut ys)?;
        tron_direction(m, &pred, &xs, &ys, &mut acc, &mut g);
        let d = monitor(&w);
        last = d;
        steps = t;
        if !d.is_finite() || d > threshold {
            return Err(Error::Divergence { t, dist_sq: d, threshold });
        }
        if first_hit.is_none() && d <= hit_level {
            first_hit = Some(t);
        }
        let stop = settings.early_stop && d <= stop_level;
        if t == 1 || t % settings.record_every == 0 || t == settings.horizon || stop {
            rows.push(TraceRow { t, dist_sq: d, grad_norm: g.iter().map(|v| v * v).sum::<f64>().sqrt() });
        }
        if stop {
            early_stopped = true;
            break;
        }
        if t < settings.horizon {
            for (wi, gi) in w.iter_mut().zip(&g) {
                *wi += settings.eta * gi;
            }
            pred.refresh(net, &w);
        }
    }
    Ok(Trace {
        rows,
        final_w: Vector::from_vec(w),
        final_dist_sq: last,
        steps,
        first_hit,
        early_stopped,
        stats: oracle.stats(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

fn attacked_oracle(problem: &Problem, attack: &AttackSpec, plan: &RunPlan, coins: RngStream) -> Result<AdversarialOracle> {
    let replay = ReplayContext { eta: plan.eta, m: problem.m.clone(), w_init: plan.w_init.clone() };
    AdversarialOracle::new(&problem.net, &problem.w_star, attack, coins, Some(replay))
}

fn run_planned(problem: &Problem, attack: &AttackSpec, cfg: &TrainConfig, plan: &RunPlan, streams_root: &RngStream) -> Result<Trace> {
    let mut data = streams_root.derive(streams::DATA);
    let coins = streams_root.derive(streams::COINS);
    let mut oracle = attacked_oracle(problem, attack, plan, coins)?;
    let settings = LoopSettings {
        eta: plan.eta,
        horizon: plan.horizon,
        record_every: plan.record_every,
        eps: cfg.eps,
        early_stop: cfg.early_stop,
    };
    let w_star = problem.w_star.as_slice();
    let mut monitor = |w: &[f64]| dist_sq(w, w_star);
    run_with_oracle(
        &problem.net,
        &problem.m,
        &problem.dist,
        &plan.w_init,
        &settings,
        cfg.batch,
        &mut data,
        &mut oracle,
        &mut monitor,
    )
}

/// One seeded training run.
pub fn run(problem: &Problem, attack: &AttackSpec, cfg: &TrainConfig) -> Result<(RunPlan, Trace)> {
    let plan = plan(problem, attack, cfg)?;
    let trace = run_planned(problem, attack, cfg, &plan, &RngStream::new(cfg.seed))?;
    Ok((plan, trace))
}

#[derive(Clone, Debug, Serialize)]
pub struct PredictedEcho {
    pub eps: f64,
    pub delta: f64,
    pub horizon: usize,
    pub eta: f64,
    pub case: Option<Case>,
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialSummary {
    #[serde(rename = "R")]
    pub trials: usize,
    pub eps: f64,
    pub delta: f64,
    pub success_count: usize,
    pub success_fraction: f64,
    /// `1 − δ − 3√(δ(1−δ)/R)`.
    pub required_fraction: f64,
    pub confidence_met: bool,
    pub target_dist_sq: f64,
    pub mean_final_dist_sq: f64,
    pub se_final_dist_sq: f64,
    /// `mean ≤ ε²δ + 3·SE`.
    pub mean_within_target: bool,
    pub diverged: Vec<usize>,
    pub final_dist_sq: Vec<Option<f64>>,
    pub first_hit: Vec<Option<usize>>,
    pub attack: AttackStats,
    pub predicted: PredictedEcho,
}

pub fn binomial_slack(delta: f64, trials: usize) -> f64 {
    3.0 * (delta * (1.0 - delta) / trials as f64).sqrt()
}

/// `R` runs sharing the start point; each trial draws data and coins from its own substream.
pub fn run_trials(problem: &Problem, attack: &AttackSpec, cfg: &TrainConfig, trials: usize) -> Result<TrialSummary> {
    if trials == 0 {
        return Err(Error::InvalidDimension("trial count R must be >= 1".into()));
    }
    let (plan, outcomes) = run_trial_traces(problem, attack, cfg, trials)?;
    summarize(cfg, &plan, outcomes)
}

/// The raw per-trial outcomes behind [`run_trials`], in trial order.
pub fn run_trial_traces(
    problem: &Problem,
    attack: &AttackSpec,
    cfg: &TrainConfig,
    trials: usize,
) -> Result<(RunPlan, Vec<Result<Trace>>)> {
    if trials == 0 {
        return Err(Error::InvalidDimension("trial count R must be >= 1".into()));
    }
    let plan = plan(problem, attack, cfg)?;
    let trial_root = RngStream::new(cfg.seed).derive(streams::TRIAL);
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|i| run_planned(problem, attack, cfg, &plan, &trial_root.derive(i as u64)))
        .collect();
    Ok((plan, outcomes))
}

fn summarize(cfg: &TrainConfig, plan: &RunPlan, outcomes: Vec<Result<Trace>>) -> Result<TrialSummary> {
    let trials = outcomes.len();
    let eps_sq = if cfg.eps.is_finite() { cfg.eps * cfg.eps } else { f64::INFINITY };
    let mut finals = Vec::with_capacity(trials);
    let mut hits = Vec::with_capacity(trials);
    let mut diverged = Vec::new();
    let mut stats = AttackStats::default();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(trace) => {
                finals.push(Some(trace.final_dist_sq));
                hits.push(trace.first_hit);
                stats.merge(&trace.stats);
            }
            Err(Error::Divergence { .. }) => {
                finals.push(None);
                hits.push(None);
                diverged.push(i);
            }
            Err(e) => return Err(e),
        }
    }
    let ok: Vec<f64> = finals.iter().flatten().copied().collect();
    let success_count = ok.iter().filter(|&&d| d <= eps_sq).count();
    let (mean, se) = if ok.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let k = ok.len() as f64;
        let mean = ok.iter().sum::<f64>() / k;
        let var = if ok.len() > 1 { ok.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0) } else { 0.0 };
        (mean, (var / k).sqrt())
    };
    let success_fraction = success_count as f64 / trials as f64;
    let required_fraction = 1.0 - cfg.delta - binomial_slack(cfg.delta, trials);
    let target = eps_sq * cfg.delta;
    Ok(TrialSummary {
        trials,
        eps: cfg.eps,
        delta: cfg.delta,
        success_count,
        success_fraction,
        required_fraction,
        confidence_met: success_fraction >= required_fraction,
        target_dist_sq: target,
        mean_final_dist_sq: mean,
        se_final_dist_sq: se,
        mean_within_target: mean <= target + 3.0 * se,
        diverged,
        final_dist_sq: finals,
        first_hit: hits,
        attack: stats,
        predicted: PredictedEcho {
            eps: cfg.eps,
            delta: cfg.delta,
            horizon: plan.horizon,
            eta: plan.eta,
            case: plan.prediction.as_ref().map(|p| p.case),
            gamma: plan.prediction.as_ref().map(|p| p.gamma),
        },
    })
}
