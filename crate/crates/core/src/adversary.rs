//! Label oracles. The adversarial oracle answers `y = f_{w*}(x) + α·ξ_x` with
//! `α ~ Bernoulli(β(x))` and `|ξ_x| ≤ θ`.

use serde::{Deserialize, Serialize};

use crate::distribution::{BetaProfile, InputDistribution};
use crate::error::{Error, Result};
use crate::mathcore::linalg::{dot, Matrix, Vector};
use crate::mathcore::RngStream;
use crate::model::{NetSpec, Predictor};
use crate::trainer::tron_direction;

/// Tolerance above θ before a corruption is clamped.
pub const CLAMP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum XiStrategy {
    #[serde(rename = "const_pos")]
    ConstantPositive,
    #[serde(rename = "signed_uniform")]
    SignedUniform,
    /// `ξ = θ·sign((w_t − w*)ᵀ M x)`, with `w_t` replayed from the public update rule.
    #[serde(rename = "grad_oppose")]
    GradientOpposing,
    /// `ξ = f_{w_adv}(x) − f_{w*}(x)`.
    #[serde(rename = "consistent")]
    ConsistentAlternative { w_adv: Vector },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub theta: f64,
    pub profile: BetaProfile,
    pub strategy: XiStrategy,
}

impl AttackSpec {
    pub fn none() -> Self {
        AttackSpec { theta: 0.0, profile: BetaProfile::constant(0.0), strategy: XiStrategy::SignedUniform }
    }

    pub fn validate(&self, net: &NetSpec) -> Result<()> {
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(Error::Domain(format!("theta must be finite and >= 0, got {}", self.theta)));
        }
        self.profile.validate()?;
        if let XiStrategy::ConsistentAlternative { w_adv } = &self.strategy {
            if w_adv.len() != net.r() {
                return Err(Error::shape("attack", format!("w_adv has length {}, net expects r={}", w_adv.len(), net.r())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct AttackStats {
    pub queries: u64,
    pub attacks: u64,
    pub clamps: u64,
    /// Largest `|y − f_{w*}(x)|` returned.
    pub max_abs_xi: f64,
}

impl AttackStats {
    pub fn merge(&mut self, other: &AttackStats) {
        self.queries += other.queries;
        self.attacks += other.attacks;
        self.clamps += other.clamps;
        self.max_abs_xi = self.max_abs_xi.max(other.max_abs_xi);
    }
}

/// Learner-facing label source. `xs` holds `b` row-major inputs of length `n`.
pub trait LabelOracle {
    fn answer_batch(&mut self, xs: &[f64], ys: &mut [f64]) -> Result<()>;
    fn stats(&self) -> AttackStats;
}

/// Public information a replaying adversary needs: step size, `M`, and the start point.
#[derive(Clone, Debug)]
pub struct ReplayContext {
    pub eta: f64,
    pub m: Matrix,
    pub w_init: Vector,
}

#[derive(Clone, Debug)]
struct Replica {
    eta: f64,
    m: Matrix,
    w: Vec<f64>,
    frozen: bool,
    pred: Predictor,
    residual: Vec<f64>,
    grad: Vec<f64>,
    /// `Mᵀ(w_t − w*)`, refreshed per batch.
    probe: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct AdversarialOracle {
    net: NetSpec,
    w_star: Vector,
    truth: Predictor,
    alt: Option<Predictor>,
    attack: AttackSpec,
    replica: Option<Replica>,
    coins: RngStream,
    xi_rng: RngStream,
    stats: AttackStats,
}

impl AdversarialOracle {
    /// `coins` drives both the Bernoulli coins and (on a child stream) random ξ draws.
    pub fn new(
        net: &NetSpec,
        w_star: &Vector,
        attack: &AttackSpec,
        coins: RngStream,
        replay: Option<ReplayContext>,
    ) -> Result<Self> {
        attack.validate(net)?;
        let truth = net.predictor(w_star)?;
        let alt = match &attack.strategy {
            XiStrategy::ConsistentAlternative { w_adv } => Some(net.predictor(w_adv)?),
            _ => None,
        };
        let replica = match (&attack.strategy, replay) {
            (XiStrategy::GradientOpposing, Some(ctx)) => {
                if ctx.m.shape() != (net.r(), net.n()) || ctx.w_init.len() != net.r() {
                    return Err(Error::shape("grad_oppose replay", "M or w_init does not match the net"));
                }
                Some(Replica {
                    eta: ctx.eta,
                    pred: net.predictor(&ctx.w_init)?,
                    w: ctx.w_init.into_vec(),
                    m: ctx.m,
                    frozen: false,
                    residual: vec![0.0; net.n()],
                    grad: vec![0.0; net.r()],
                    probe: vec![0.0; net.n()],
                })
            }
            (XiStrategy::GradientOpposing, None) => {
                return Err(Error::config("attack.strategy", "grad_oppose needs the learner's step size and M"))
            }
            _ => None,
        };
        let xi_rng = coins.derive(1);
        Ok(AdversarialOracle {
            net: net.clone(),
            w_star: w_star.clone(),
            truth,
            alt,
            attack: attack.clone(),
            replica,
            coins,
            xi_rng,
            stats: AttackStats::default(),
        })
    }

    /// Pins the replayed learner state at `w` (for conditional, frozen-iterate checks).
    pub fn freeze_replica_at(&mut self, w: &Vector) -> Result<()> {
        if let Some(rep) = self.replica.as_mut() {
            if w.len() != rep.w.len() {
                return Err(Error::shape("freeze_replica_at", "filter length mismatch"));
            }
            rep.w.copy_from_slice(w.as_slice());
            rep.pred.refresh(&self.net, &rep.w);
            rep.frozen = true;
        }
        Ok(())
    }

    pub fn replica_state(&self) -> Option<&[f64]> {
        self.replica.as_ref().map(|r| r.w.as_slice())
    }

    fn refresh_probe(&mut self) {
        if let Some(rep) = self.replica.as_mut() {
            let diff: Vec<f64> = rep.w.iter().zip(self.w_star.as_slice()).map(|(a, b)| a - b).collect();
            rep.m.tr_matvec_into(&diff, &mut rep.probe);
        }
    }

    /// Single query; `probe` must be current for `GradientOpposing`.
    fn query(&mut self, x: &[f64]) -> Result<(f64, bool)> {
        let clean = self.truth.eval_slice(x);
        if !clean.is_finite() {
            return Err(Error::Numeric("f_{w*}(x) is not finite".into()));
        }
        self.stats.queries += 1;
        let u = self.coins.uniform();
        let attacked = u < self.attack.profile.eval(x);
        if !attacked {
            return Ok((clean, false));
        }
        self.stats.attacks += 1;
        let theta = self.attack.theta;
        let mut xi = match &self.attack.strategy {
            XiStrategy::ConstantPositive => theta,
            XiStrategy::SignedUniform => self.xi_rng.uniform_in(-theta, theta),
            XiStrategy::GradientOpposing => {
                let probe = &self.replica.as_ref().expect("replica present for grad_oppose").probe;
                if dot(probe, x) >= 0.0 {
                    theta
                } else {
                    -theta
                }
            }
            XiStrategy::ConsistentAlternative { .. } => {
                self.alt.as_ref().expect("alt predictor for consistent").eval_slice(x) - clean
            }
        };
        if !xi.is_finite() {
            return Err(Error::Numeric("corruption is not finite".into()));
        }
        if xi.abs() > theta + CLAMP_TOL {
            xi = theta.copysign(xi);
            self.stats.clamps += 1;
        }
        if xi == 0.0 {
            return Ok((clean, true));
        }
        self.stats.max_abs_xi = self.stats.max_abs_xi.max(xi.abs());
        Ok((clean + xi, true))
    }

    pub fn oracle_query(&mut self, x: &Vector) -> Result<(f64, bool)> {
        if x.len() != self.net.n() {
            return Err(Error::shape("oracle_query", format!("input length {} != n={}", x.len(), self.net.n())));
        }
        self.refresh_probe();
        self.query(x.as_slice())
    }

    fn advance_replica(&mut self, xs: &[f64], ys: &[f64]) {
        let net = &self.net;
        if let Some(rep) = self.replica.as_mut() {
            if rep.frozen {
                return;
            }
            tron_direction(&rep.m, &rep.pred, xs, ys, &mut rep.residual, &mut rep.grad);
            for (w, g) in rep.w.iter_mut().zip(&rep.grad) {
                *w += rep.eta * g;
            }
            rep.pred.refresh(net, &rep.w);
        }
    }
}

impl LabelOracle for AdversarialOracle {
    fn answer_batch(&mut self, xs: &[f64], ys: &mut [f64]) -> Result<()> {
        let n = self.net.n();
        debug_assert_eq!(xs.len(), n * ys.len());
        self.refresh_probe();
        for (x, y) in xs.chunks_exact(n).zip(ys.iter_mut()) {
            *y = self.query(x)?.0;
        }
        self.advance_replica(xs, ys);
        Ok(())
    }

    fn stats(&self) -> AttackStats {
        self.stats
    }
}

/// Clean labels `y = f_{w*}(x)`.
#[derive(Clone, Debug)]
pub struct FaithfulOracle {
    truth: Predictor,
    n: usize,
    queries: u64,
}

impl FaithfulOracle {
    pub fn new(net: &NetSpec, w_star: &Vector) -> Result<Self> {
        Ok(FaithfulOracle { truth: net.predictor(w_star)?, n: net.n(), queries: 0 })
    }
}

impl LabelOracle for FaithfulOracle {
    fn answer_batch(&mut self, xs: &[f64], ys: &mut [f64]) -> Result<()> {
        for (x, y) in xs.chunks_exact(self.n).zip(ys.iter_mut()) {
            *y = self.truth.eval_slice(x);
            if !y.is_finite() {
                return Err(Error::Numeric("f_{w*}(x) is not finite".into()));
            }
        }
        self.queries += ys.len() as u64;
        Ok(())
    }

    fn stats(&self) -> AttackStats {
        AttackStats { queries: self.queries, ..AttackStats::default() }
    }
}

/// Corruption budget that makes `f_{w_adv}` exactly realizable on a bounded support:
/// `R‖w_adv − w*‖` for a single identity gate, else `(1+α)·R·max_i √λ_max(A_iA_iᵀ)·‖w_adv − w*‖`.
pub fn required_zeta(net: &NetSpec, w_adv: &Vector, w_star: &Vector, dist: &InputDistribution) -> Result<f64> {
    let radius = dist.support_radius().ok_or_else(|| {
        Error::UnsupportedDistribution("required_zeta needs a bounded support (sphere or ball)".into())
    })?;
    let gap = w_adv.sub(w_star)?.norm();
    if net.sensing().is_identity_gate() {
        return Ok(radius * gap);
    }
    let spread = net.sensing().max_member_lambda()?.sqrt();
    Ok((1.0 + net.leak_alpha()) * radius * spread * gap)
}
