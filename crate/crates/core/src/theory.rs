//! Convergence constants and predictions for the mini-batched Tron iteration.
//!
//! Case I covers clean labels (θ = 0) and yields a contraction factor κ. Case II
//! covers bounded probabilistic label corruption and reduces to the scalar recursion
//! `Δ_{t+1} ≤ α Δ_t + β`, whose horizon is solved in closed form and cross-checked
//! by direct unrolling.

use serde::Serialize;

use crate::distribution::{moment_set, BetaProfile, InputDistribution, MomentSet};
use crate::error::{Error, Result};
use crate::mathcore::linalg::{eig_extremes_symmetric, lambda_max_gram, Matrix};
use crate::mathcore::special::log_gamma;
use crate::mathcore::RngStream;
use crate::model::NetSpec;

/// Horizons beyond this are reported as a numeric failure instead of being run.
pub const MAX_HORIZON: usize = 1 << 40;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoryConstants {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub c_sq: f64,
    pub moments: MomentSet,
    pub leak_alpha: f64,
    pub batch: usize,
}

impl TheoryConstants {
    /// Evaluates every constant without enforcing `λ1 > 0`.
    pub fn evaluate(net: &NetSpec, m: &Matrix, sigma: &Matrix, moments: MomentSet, batch: usize) -> Result<Self> {
        if batch == 0 {
            return Err(Error::InvalidDimension("batch size must be >= 1".into()));
        }
        if m.shape() != (net.r(), net.n()) {
            return Err(Error::shape(
                "compute_constants",
                format!("M is {:?}, net expects {}x{}", m.shape(), net.r(), net.n()),
            ));
        }
        m.ensure_finite()?;
        let abar_sigma = net.sensing().mean().matmul(sigma)?;
        let s = abar_sigma.matmul(&m.transpose())?;
        let (lambda1, _) = eig_extremes_symmetric(&s)?;
        let lambda2 = lambda_max_gram(m)?.max(0.0).sqrt();
        let lambda3 = net.sensing().lambda3();
        let alpha = net.leak_alpha();
        Ok(TheoryConstants {
            lambda1,
            lambda2,
            lambda3,
            c_sq: (1.0 + alpha).powi(2) * lambda3,
            moments,
            leak_alpha: alpha,
            batch,
        })
    }

    pub fn precondition_holds(&self) -> bool {
        self.lambda1 > 0.0
    }

    pub fn require_precondition(&self) -> Result<()> {
        if self.precondition_holds() {
            Ok(())
        } else {
            Err(Error::infeasible("lambda1 > 0", format!("lambda1 = {:e}", self.lambda1)))
        }
    }

    fn batch_weights(&self) -> (f64, f64) {
        let inv_b = 1.0 / self.batch as f64;
        (1.0 - inv_b, inv_b)
    }

    /// `m4/b + m2²(1 − 1/b)`.
    pub fn case1_moment_factor(&self) -> f64 {
        let (cross, diag) = self.batch_weights();
        let mo = &self.moments;
        mo.m4() * diag + mo.m2() * mo.m2() * cross
    }

    /// `(β1 m2 + m2²)(1 − 1/b) + (β3 + m4)/b`.
    pub fn case2_moment_factor(&self) -> f64 {
        let (cross, diag) = self.batch_weights();
        let mo = &self.moments;
        (mo.b1() * mo.m2() + mo.m2() * mo.m2()) * cross + (mo.b3() + mo.m4()) * diag
    }

    /// `(β1² + β1 m2)(1 − 1/b) + (β2 + β3)/b`.
    pub fn case2_noise_factor(&self) -> f64 {
        let (cross, diag) = self.batch_weights();
        let mo = &self.moments;
        (mo.b1() * mo.b1() + mo.b1() * mo.m2()) * cross + (mo.b2() + mo.b3()) * diag
    }
}

/// All constants for `(net, M, D_in, β, b)`; refuses when `λ1 ≤ 0`.
pub fn compute_constants(
    net: &NetSpec,
    m: &Matrix,
    dist: &InputDistribution,
    profile: &BetaProfile,
    batch: usize,
    rng: &mut RngStream,
    mc_samples: usize,
) -> Result<TheoryConstants> {
    let consts = evaluate_constants(net, m, dist, profile, batch, rng, mc_samples)?;
    consts.require_precondition()?;
    Ok(consts)
}

/// Like [`compute_constants`] but leaves the `λ1 > 0` check to the caller.
pub fn evaluate_constants(
    net: &NetSpec,
    m: &Matrix,
    dist: &InputDistribution,
    profile: &BetaProfile,
    batch: usize,
    rng: &mut RngStream,
    mc_samples: usize,
) -> Result<TheoryConstants> {
    dist.validate()?;
    if dist.dim() != net.n() {
        return Err(Error::shape("compute_constants", format!("distribution n={} but net n={}", dist.dim(), net.n())));
    }
    let moments = moment_set(dist, profile, rng, mc_samples)?;
    TheoryConstants::evaluate(net, m, &dist.second_moment_matrix(), moments, batch)
}

/// `(1+α)λ1/(β1λ2) − 1`; `+∞` when `β1 = 0`.
pub fn c_tradeoff(consts: &TheoryConstants) -> Result<f64> {
    let b1 = consts.moments.b1();
    if b1 == 0.0 {
        return Ok(f64::INFINITY);
    }
    if consts.lambda2 <= 0.0 {
        return Err(Error::infeasible("lambda2 > 0", format!("lambda2 = {:e}", consts.lambda2)));
    }
    Ok((1.0 + consts.leak_alpha) * consts.lambda1 / (b1 * consts.lambda2) - 1.0)
}

/// Trade-off constant for a single ReLU gate with `M = A = I`, Gaussian inputs and constant β.
pub fn gaussian_tradeoff_closed_form(sigma: f64, beta: f64, n: usize) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("beta must lie in (0, 1), got {beta}")));
    }
    if n == 0 {
        return Err(Error::InvalidDimension("n must be >= 1".into()));
    }
    let nf = n as f64;
    let ratio = (log_gamma(nf / 2.0)? - log_gamma((nf + 1.0) / 2.0)?).exp();
    Ok(sigma / (std::f64::consts::SQRT_2 * beta) * ratio - 1.0)
}

/// `θ* = √(ε²δ·c_trade-off)`.
pub fn theta_star(eps: f64, delta: f64, c_tradeoff: f64) -> Result<f64> {
    if !(eps > 0.0 && delta > 0.0 && c_tradeoff > 0.0) {
        return Err(Error::Domain(format!(
            "theta_star needs eps, delta, c_tradeoff > 0 (got {eps}, {delta}, {c_tradeoff})"
        )));
    }
    Ok((eps * eps * delta * c_tradeoff).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Case1Step {
    pub eta: f64,
    pub gamma: f64,
    pub kappa: f64,
}

/// `max{C, 1}` with `C = λ1²/(λ2²λ3(m4/b + m2²(1−1/b)))`.
pub fn case1_gamma_bound(consts: &TheoryConstants) -> Result<f64> {
    consts.require_precondition()?;
    let denom = consts.lambda2.powi(2) * consts.lambda3 * consts.case1_moment_factor();
    if !(denom > 0.0) {
        return Err(Error::infeasible("lambda2^2 lambda3 D > 0", format!("value {denom:e}")));
    }
    Ok((consts.lambda1.powi(2) / denom).max(1.0))
}

pub fn default_gamma_case1(consts: &TheoryConstants) -> Result<f64> {
    Ok(2.0 * case1_gamma_bound(consts)?)
}

pub fn step_size_case1(consts: &TheoryConstants, gamma: f64) -> Result<Case1Step> {
    let bound = case1_gamma_bound(consts)?;
    if !(gamma > bound) {
        return Err(Error::infeasible("gamma > max{C, 1}", format!("gamma = {gamma}, bound = {bound}")));
    }
    let d = consts.lambda2.powi(2) * consts.lambda3 * consts.case1_moment_factor();
    let eta = consts.lambda1 / (gamma * (1.0 + consts.leak_alpha) * d);
    let kappa = 1.0 - (gamma - 1.0) / (gamma * gamma) * consts.lambda1.powi(2) / d;
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::Numeric(format!("kappa = {kappa} left (0, 1)")));
    }
    Ok(Case1Step { eta, gamma, kappa })
}

fn check_horizon(t: f64) -> Result<usize> {
    if !t.is_finite() || t > MAX_HORIZON as f64 {
        return Err(Error::Numeric(format!("predicted horizon {t} exceeds {MAX_HORIZON}")));
    }
    Ok(t.max(1.0) as usize)
}

/// Smallest `T` with `κ^(T−1)·Δ1 ≤ ε²δ`.
pub fn horizon_case1(delta1: f64, eps: f64, delta: f64, kappa: f64) -> Result<usize> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::Domain(format!("kappa must lie in (0, 1), got {kappa}")));
    }
    if !(delta1 >= 0.0) || !(eps >= 0.0) || !(delta >= 0.0) {
        return Err(Error::Domain("delta1, eps, delta must be non-negative".into()));
    }
    let target = eps * eps * delta;
    if delta1 <= target {
        return Ok(1);
    }
    if target == 0.0 {
        return Err(Error::Numeric("eps^2 delta = 0 needs an infinite horizon".into()));
    }
    let holds = |t: usize| kappa.powf((t - 1) as f64) * delta1 <= target;
    let mut t = check_horizon(1.0 + ((target / delta1).ln() / kappa.ln()).ceil())?;
    while t > 1 && holds(t - 1) {
        t -= 1;
    }
    while !holds(t) {
        t += 1;
    }
    Ok(t)
}

/// Step size and recursion coefficients of Case II, independent of `Δ1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Case2Step {
    pub eta: f64,
    pub eta_prime: f64,
    pub gamma: f64,
    pub b_star: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub eps_prime_sq: f64,
    pub c_tradeoff: f64,
    pub theta_star: f64,
}

struct Case2Core {
    b_star: f64,
    c1: f64,
    c2: f64,
    c3: f64,
    c_tradeoff: f64,
    eps_prime_sq: f64,
}

fn case2_core(consts: &TheoryConstants, theta: f64, eps: f64, delta: f64) -> Result<Case2Core> {
    consts.require_precondition()?;
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!("theta must be finite and >= 0, got {theta}")));
    }
    if !(eps > 0.0 && delta > 0.0) {
        return Err(Error::Domain(format!("eps and delta must be positive (got {eps}, {delta})")));
    }
    let c_to = c_tradeoff(consts)?;
    if !(c_to > 0.0) {
        return Err(Error::infeasible("c_tradeoff > 0", format!("c_tradeoff = {c_to}")));
    }
    let eps_prime_sq = eps * eps * delta;
    let ts = theta_star(eps, delta, c_to)?;
    if theta > ts {
        return Err(Error::infeasible("theta <= theta_star", format!("theta = {theta}, theta_star = {ts}")));
    }
    let b_star = (1.0 + consts.leak_alpha) * consts.lambda1 / consts.lambda2 - consts.moments.b1();
    let c1 = consts.c_sq * consts.case2_moment_factor();
    if !(c1 > 0.0) {
        return Err(Error::infeasible("c1 > 0", format!("c1 = {c1:e}")));
    }
    Ok(Case2Core {
        b_star,
        c1,
        c2: theta * theta * consts.case2_noise_factor(),
        c3: theta * theta * consts.moments.b1(),
        c_tradeoff: c_to,
        eps_prime_sq,
    })
}

fn recursion_gamma_bound(b_star: f64, c1: f64, c2: f64, c3: f64, eps_prime_sq: f64) -> Result<f64> {
    let margin = eps_prime_sq - c3 / b_star;
    if !(margin > 0.0) {
        return Err(Error::infeasible(
            "eps'^2 > c3/b*",
            format!("eps'^2 = {eps_prime_sq:e}, c3/b* = {:e}", c3 / b_star),
        ));
    }
    let c2_bound = (eps_prime_sq + c2 / c1) / margin;
    Ok((b_star * b_star / c1).max(c2_bound).max(1.0))
}

/// `max{b*²/c1, C2, 1}`.
pub fn case2_gamma_bound(consts: &TheoryConstants, theta: f64, eps: f64, delta: f64) -> Result<f64> {
    let core = case2_core(consts, theta, eps, delta)?;
    recursion_gamma_bound(core.b_star, core.c1, core.c2, core.c3, core.eps_prime_sq)
}

pub fn step_size_case2(
    consts: &TheoryConstants,
    theta: f64,
    gamma: Option<f64>,
    eps: f64,
    delta: f64,
) -> Result<Case2Step> {
    let core = case2_core(consts, theta, eps, delta)?;
    let bound = recursion_gamma_bound(core.b_star, core.c1, core.c2, core.c3, core.eps_prime_sq)?;
    let gamma = gamma.unwrap_or(2.0 * bound);
    if !(gamma > bound) {
        return Err(Error::infeasible(
            "gamma > max{b*^2/c1, C2, 1}",
            format!("gamma = {gamma}, bound = {bound}"),
        ));
    }
    let eta_prime = core.b_star / (gamma * core.c1);
    Ok(Case2Step {
        eta: eta_prime / consts.lambda2,
        eta_prime,
        gamma,
        b_star: core.b_star,
        c1: core.c1,
        c2: core.c2,
        c3: core.c3,
        eps_prime_sq: core.eps_prime_sq,
        c_tradeoff: core.c_tradeoff,
        theta_star: theta_star(eps, delta, core.c_tradeoff)?,
    })
}

/// Inputs of the scalar recursion `Δ_{t+1} ≤ (1 − η′b + η′²c1)Δ_t + η′²c2 + η′c3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RecursionParams {
    pub delta1: f64,
    pub b_star: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub eta_prime: f64,
    pub gamma: f64,
    pub eps_prime_sq: f64,
}

impl RecursionParams {
    /// Builds params with `η′ = b*/(γ c1)` and no validation.
    pub fn raw(delta1: f64, b_star: f64, c1: f64, c2: f64, c3: f64, gamma: f64, eps_prime_sq: f64) -> Self {
        RecursionParams { delta1, b_star, c1, c2, c3, eta_prime: b_star / (gamma * c1), gamma, eps_prime_sq }
    }

    pub fn new(delta1: f64, b_star: f64, c1: f64, c2: f64, c3: f64, gamma: f64, eps_prime_sq: f64) -> Result<Self> {
        let p = Self::raw(delta1, b_star, c1, c2, c3, gamma, eps_prime_sq);
        match p.violations().into_iter().next() {
            None => Ok(p),
            Some((constraint, detail)) => Err(Error::infeasible(constraint, detail)),
        }
    }

    /// Every failed precondition as `(inequality, marginal values)`.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if !(self.b_star > 0.0 && self.c1 > 0.0 && self.c2 >= 0.0 && self.c3 >= 0.0) {
            out.push((
                "b* > 0, c1 > 0, c2 >= 0, c3 >= 0",
                format!("b* = {}, c1 = {}, c2 = {}, c3 = {}", self.b_star, self.c1, self.c2, self.c3),
            ));
            return out;
        }
        let floor = self.c3 / self.b_star;
        if !(self.eps_prime_sq > floor) {
            out.push(("eps'^2 > c3/b*", format!("eps'^2 = {:e}, c3/b* = {floor:e}", self.eps_prime_sq)));
        }
        if !(self.eps_prime_sq < self.delta1) {
            out.push(("eps'^2 < delta1", format!("eps'^2 = {:e}, delta1 = {:e}", self.eps_prime_sq, self.delta1)));
        }
        let g1 = self.b_star * self.b_star / self.c1;
        if !(self.gamma > g1) {
            out.push(("gamma > b*^2/c1", format!("gamma = {}, b*^2/c1 = {g1}", self.gamma)));
        }
        if self.eps_prime_sq > floor {
            let g2 = (self.eps_prime_sq + self.c2 / self.c1) / (self.eps_prime_sq - floor);
            if !(self.gamma > g2) {
                out.push(("gamma > C2", format!("gamma = {}, C2 = {g2}", self.gamma)));
            }
        }
        if !(self.gamma > 1.0) {
            out.push(("gamma > 1", format!("gamma = {}", self.gamma)));
        }
        out
    }

    pub fn alpha_rec(&self) -> f64 {
        1.0 - self.eta_prime * self.b_star + self.eta_prime * self.eta_prime * self.c1
    }

    pub fn beta_rec(&self) -> f64 {
        self.eta_prime * self.eta_prime * self.c2 + self.eta_prime * self.c3
    }

    /// `α^(t−1)Δ1 + β(1 − α^(t−1))/(1 − α)`.
    pub fn closed_form(&self, t: usize) -> f64 {
        let (a, b) = (self.alpha_rec(), self.beta_rec());
        let at = a.powf(t.saturating_sub(1) as f64);
        at * self.delta1 + b * (1.0 - at) / (1.0 - a)
    }
}

/// Case II recursion for a run starting at squared distance `delta1`.
pub fn case2_recursion_params(
    consts: &TheoryConstants,
    theta: f64,
    gamma: Option<f64>,
    eps: f64,
    delta: f64,
    delta1: f64,
) -> Result<RecursionParams> {
    let step = step_size_case2(consts, theta, gamma, eps, delta)?;
    RecursionParams::new(delta1, step.b_star, step.c1, step.c2, step.c3, step.gamma, step.eps_prime_sq)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Lemma4Claims {
    pub claim1: bool,
    pub claim2: bool,
    pub alpha_rec: f64,
    pub beta_rec: f64,
}

/// Claim 1: `α ∈ (0,1)`. Claim 2: `ε′²(1−α) − β > 0`.
pub fn lemma4_claims(params: &RecursionParams) -> Lemma4Claims {
    let alpha_rec = params.alpha_rec();
    let beta_rec = params.beta_rec();
    Lemma4Claims {
        claim1: alpha_rec > 0.0 && alpha_rec < 1.0,
        claim2: params.eps_prime_sq * (1.0 - alpha_rec) - beta_rec > 0.0,
        alpha_rec,
        beta_rec,
    }
}

/// Smallest `T` whose unrolled bound is at most `ε′²`.
pub fn horizon_case2(params: &RecursionParams) -> Result<usize> {
    let claims = lemma4_claims(params);
    if !claims.claim1 {
        return Err(Error::infeasible("claim 1: alpha in (0, 1)", format!("alpha = {}", claims.alpha_rec)));
    }
    if !claims.claim2 {
        let margin = params.eps_prime_sq * (1.0 - claims.alpha_rec) - claims.beta_rec;
        return Err(Error::infeasible("claim 2: eps'^2 (1 - alpha) - beta > 0", format!("value = {margin:e}")));
    }
    if params.delta1 <= params.eps_prime_sq {
        return Ok(1);
    }
    let (a, b) = (claims.alpha_rec, claims.beta_rec);
    let ratio = (params.eps_prime_sq * (1.0 - a) - b) / (params.delta1 * (1.0 - a) - b);
    let holds = |t: usize| params.closed_form(t) <= params.eps_prime_sq;
    let mut t = check_horizon(1.0 + (ratio.ln() / a.ln()).ceil())?;
    while t > 1 && holds(t - 1) {
        t -= 1;
    }
    while !holds(t) {
        t += 1;
        check_horizon(t as f64)?;
    }
    Ok(t)
}

/// `Δ_1..Δ_T` by direct iteration of `Δ_{t+1} = αΔ_t + β`.
pub fn recursion_unroll(params: &RecursionParams, t_max: usize) -> Result<Vec<f64>> {
    if t_max == 0 {
        return Err(Error::InvalidDimension("unroll length must be >= 1".into()));
    }
    let (a, b) = (params.alpha_rec(), params.beta_rec());
    let mut out = Vec::with_capacity(t_max);
    let mut d = params.delta1;
    out.push(d);
    for _ in 1..t_max {
        d = a * d + b;
        out.push(d);
    }
    Ok(out)
}

/// `(proof_version, printed_version)` of `c_rate`. Both are θ-free.
pub fn c_rate(consts: &TheoryConstants, gamma: f64) -> Result<(f64, f64)> {
    if !(gamma > 1.0) {
        return Err(Error::Domain(format!("c_rate needs gamma > 1, got {gamma}")));
    }
    let c_to = c_tradeoff(consts)?;
    let mo = &consts.moments;
    let k2_over_c1 = consts.case2_noise_factor() / (consts.c_sq * consts.case2_moment_factor());
    let proof = (gamma - 1.0) / (k2_over_c1 + gamma / c_to);
    let printed_lead = (mo.m2() + mo.m3()) / (consts.c_sq * (mo.m3() + mo.m4()));
    let printed = (gamma - 1.0) / (printed_lead + gamma / c_to);
    Ok((proof, printed))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RiskCondition {
    pub lhs: f64,
    pub satisfied: bool,
}

/// `c²·m2/(δ·c_trade-off) < 1`: the learnt predictor's risk stays below `θ*²`.
pub fn risk_condition(consts: &TheoryConstants, delta: f64) -> Result<RiskCondition> {
    let c_to = c_tradeoff(consts)?;
    if !(c_to > 0.0) {
        return Err(Error::infeasible("c_tradeoff > 0", format!("c_tradeoff = {c_to}")));
    }
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    let lhs = consts.c_sq * consts.moments.m2() / (delta * c_to);
    Ok(RiskCondition { lhs, satisfied: lhs < 1.0 })
}

/// Largest constant β for which the risk condition holds with a single ReLU gate,
/// `M = A = I`, and standard Gaussian inputs scaled by `σ` (σ cancels).
pub fn gaussian_risk_beta_bound(n: usize, delta: f64) -> Result<f64> {
    if n == 0 || !(delta > 0.0) {
        return Err(Error::Domain("need n >= 1 and delta > 0".into()));
    }
    let nf = n as f64;
    let ratio = (log_gamma(nf / 2.0)? - log_gamma((nf + 1.0) / 2.0)?).exp();
    Ok(ratio / std::f64::consts::SQRT_2 / (1.0 + nf / delta))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Case {
    #[serde(rename = "I")]
    I,
    #[serde(rename = "II")]
    II,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CasePrediction {
    pub case: Case,
    pub eta: f64,
    pub gamma: f64,
    pub kappa: Option<f64>,
    pub alpha_rec: Option<f64>,
    pub beta_rec: Option<f64>,
    pub horizon: usize,
    pub theta_star: Option<f64>,
    pub c_tradeoff: Option<f64>,
    pub c_rate: Option<(f64, f64)>,
    pub params: Option<RecursionParams>,
}

pub fn predict_case1(
    consts: &TheoryConstants,
    gamma: Option<f64>,
    eps: f64,
    delta: f64,
    delta1: f64,
) -> Result<CasePrediction> {
    let gamma = match gamma {
        Some(g) => g,
        None => default_gamma_case1(consts)?,
    };
    let step = step_size_case1(consts, gamma)?;
    Ok(CasePrediction {
        case: Case::I,
        eta: step.eta,
        gamma,
        kappa: Some(step.kappa),
        alpha_rec: None,
        beta_rec: None,
        horizon: horizon_case1(delta1, eps, delta, step.kappa)?,
        theta_star: None,
        c_tradeoff: None,
        c_rate: None,
        params: None,
    })
}

pub fn predict_case2(
    consts: &TheoryConstants,
    theta: f64,
    gamma: Option<f64>,
    eps: f64,
    delta: f64,
    delta1: f64,
) -> Result<CasePrediction> {
    let step = step_size_case2(consts, theta, gamma, eps, delta)?;
    let params = RecursionParams::new(delta1, step.b_star, step.c1, step.c2, step.c3, step.gamma, step.eps_prime_sq)?;
    let horizon = horizon_case2(&params)?;
    Ok(CasePrediction {
        case: Case::II,
        eta: step.eta,
        gamma: step.gamma,
        kappa: None,
        alpha_rec: Some(params.alpha_rec()),
        beta_rec: Some(params.beta_rec()),
        horizon,
        theta_star: Some(step.theta_star),
        c_tradeoff: Some(step.c_tradeoff),
        c_rate: Some(c_rate(consts, step.gamma)?),
        params: Some(params),
    })
}

/// Case I when the labels are clean (`θ = 0` or `β1 = 0`), Case II otherwise.
pub fn select_case(consts: &TheoryConstants, theta: f64) -> Case {
    if theta == 0.0 || consts.moments.b1() == 0.0 {
        Case::I
    } else {
        Case::II
    }
}

pub fn predict(
    consts: &TheoryConstants,
    theta: f64,
    gamma: Option<f64>,
    eps: f64,
    delta: f64,
    delta1: f64,
) -> Result<CasePrediction> {
    match select_case(consts, theta) {
        Case::I => predict_case1(consts, gamma, eps, delta, delta1),
        Case::II => predict_case2(consts, theta, gamma, eps, delta, delta1),
    }
}

/// Flat summary for reporting; infeasibility is recorded rather than raised.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct TheoryReport {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub c_sq: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub batch: usize,
    pub theta: f64,
    pub eps: f64,
    pub delta: f64,
    pub delta1: f64,
    pub case: Case,
    pub c_tradeoff: Option<f64>,
    pub theta_star: Option<f64>,
    pub eta: Option<f64>,
    pub gamma: Option<f64>,
    pub kappa: Option<f64>,
    pub alpha_rec: Option<f64>,
    pub beta_rec: Option<f64>,
    pub T_predicted: Option<usize>,
    pub crate_proof: Option<f64>,
    pub crate_printed: Option<f64>,
    pub risk_lhs: Option<f64>,
    pub risk_satisfied: Option<bool>,
    pub feasible: bool,
    pub violated_constraints: Vec<String>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl TheoryReport {
    pub fn build(consts: &TheoryConstants, theta: f64, gamma: Option<f64>, eps: f64, delta: f64, delta1: f64) -> Self {
        let mo = &consts.moments;
        let case = select_case(consts, theta);
        let c_to = c_tradeoff(consts).ok();
        let mut violated = Vec::new();
        if !consts.precondition_holds() {
            violated.push(format!("lambda1 > 0 (lambda1 = {:e})", consts.lambda1));
        }
        let risk = risk_condition(consts, delta).ok();
        let mut report = TheoryReport {
            lambda1: consts.lambda1,
            lambda2: consts.lambda2,
            lambda3: consts.lambda3,
            c_sq: consts.c_sq,
            m1: mo.m1(),
            m2: mo.m2(),
            m3: mo.m3(),
            m4: mo.m4(),
            beta1: mo.b1(),
            beta2: mo.b2(),
            beta3: mo.b3(),
            beta4: mo.b4(),
            batch: consts.batch,
            theta,
            eps,
            delta,
            delta1,
            case,
            c_tradeoff: c_to.and_then(finite),
            theta_star: c_to.and_then(|c| theta_star(eps, delta, c).ok()).and_then(finite),
            eta: None,
            gamma: None,
            kappa: None,
            alpha_rec: None,
            beta_rec: None,
            T_predicted: None,
            crate_proof: None,
            crate_printed: None,
            risk_lhs: risk.map(|r| r.lhs),
            risk_satisfied: risk.map(|r| r.satisfied),
            feasible: false,
            violated_constraints: Vec::new(),
        };
        if violated.is_empty() {
            match predict(consts, theta, gamma, eps, delta, delta1) {
                Ok(p) => {
                    report.eta = Some(p.eta);
                    report.gamma = Some(p.gamma);
                    report.kappa = p.kappa;
                    report.alpha_rec = p.alpha_rec;
                    report.beta_rec = p.beta_rec;
                    report.T_predicted = Some(p.horizon);
                    if let Some((proof, printed)) = p.c_rate {
                        report.crate_proof = finite(proof);
                        report.crate_printed = finite(printed);
                    }
                }
                Err(Error::Infeasible { constraint, detail }) => violated.push(format!("{constraint} ({detail})")),
                Err(e) => violated.push(e.to_string()),
            }
        }
        report.feasible = violated.is_empty();
        report.violated_constraints = violated;
        report
    }
}
