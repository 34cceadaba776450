//! JSON experiment configuration. Unknown keys are rejected and every error names the
//! offending path.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::{AttackSpec, XiStrategy};
use crate::distribution::{BetaProfile, InputDistribution, DEFAULT_MC_SAMPLES};
use crate::error::{Error, Result};
use crate::mathcore::linalg::{Matrix, Vector};
use crate::mathcore::rng::streams;
use crate::mathcore::RngStream;
use crate::model::{sample_full_rank_m, NetSpec, SensingFamily};
use crate::theory::{self, TheoryConstants, TheoryReport};
use crate::trainer::{self, InitPoint, Problem, RunPlan, StepSize, Trace, TrainConfig, TrialSummary};

pub const SEED_ENV: &str = "TRONTIDE_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSpec {
    Identity,
    Zero,
    ScaledIdentity(f64),
    Rows(Vec<Vec<f64>>),
    Wishart { dof: usize },
}

impl MatrixSpec {
    pub fn build(&self, rows: usize, cols: usize, rng: &mut RngStream) -> Result<Matrix> {
        let m = match self {
            MatrixSpec::Identity => Matrix::scaled_identity(rows, cols, 1.0),
            MatrixSpec::Zero => Matrix::zeros(rows, cols),
            MatrixSpec::ScaledIdentity(s) => Matrix::scaled_identity(rows, cols, *s),
            MatrixSpec::Rows(data) => Matrix::from_rows(data)?,
            MatrixSpec::Wishart { dof } => sample_full_rank_m(rng, rows, cols, *dof)?,
        };
        if m.shape() != (rows, cols) {
            return Err(Error::shape("matrix spec", format!("expected {rows}x{cols}, got {:?}", m.shape())));
        }
        m.ensure_finite()?;
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SensingConfig {
    Explicit { matrices: Vec<MatrixSpec> },
    SymmetricFamily { m: MatrixSpec, c: MatrixSpec, half_width: usize },
    Conv { windows: Vec<Vec<usize>> },
}

impl Default for SensingConfig {
    fn default() -> Self {
        SensingConfig::Explicit { matrices: vec![MatrixSpec::Identity] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub leak_alpha: f64,
    pub n: usize,
    /// Filter dimension; defaults to `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    /// Optional cross-check of the family size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default)]
    pub sensing: SensingConfig,
}

impl NetConfig {
    fn filter_dim(&self) -> usize {
        match &self.sensing {
            SensingConfig::Conv { windows } => windows.first().map_or(0, Vec::len),
            _ => self.r.unwrap_or(self.n),
        }
    }

    pub fn build(&self, rng: &mut RngStream) -> Result<NetSpec> {
        if self.n == 0 {
            return Err(Error::InvalidDimension("net.n must be >= 1".into()));
        }
        let r = self.filter_dim();
        let family = match &self.sensing {
            SensingConfig::Explicit { matrices } => {
                let built = matrices
                    .iter()
                    .enumerate()
                    .map(|(i, spec)| spec.build(r, self.n, &mut rng.derive(i as u64)))
                    .collect::<Result<Vec<_>>>()?;
                SensingFamily::new(built)?
            }
            SensingConfig::SymmetricFamily { m, c, half_width } => {
                let m = m.build(r, self.n, &mut rng.derive(0))?;
                let c = c.build(r, self.n, &mut rng.derive(1))?;
                SensingFamily::build_symmetric(&m, &c, *half_width)?
            }
            SensingConfig::Conv { windows } => SensingFamily::convolutional(self.n, windows)?,
        };
        if let Some(k) = self.k {
            if k != family.k() {
                return Err(Error::config("net.k", format!("k = {k} but the sensing family has {} members", family.k())));
            }
        }
        if let (Some(r_cfg), SensingConfig::Conv { .. }) = (self.r, &self.sensing) {
            if r_cfg != family.r() {
                return Err(Error::config("net.r", format!("r = {r_cfg} but conv windows have length {}", family.r())));
            }
        }
        NetSpec::new(self.leak_alpha, family)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratedVector {
    RandomSphere { radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WStarSpec {
    Explicit(Vec<f64>),
    Generated(GeneratedVector),
}

impl WStarSpec {
    fn build(&self, r: usize, rng: &mut RngStream) -> Result<Vector> {
        match self {
            WStarSpec::Explicit(v) => {
                if v.len() != r {
                    return Err(Error::config("w_star", format!("length {} but r = {r}", v.len())));
                }
                Vector::try_from_vec(v.clone())
            }
            WStarSpec::Generated(GeneratedVector::RandomSphere { radius }) => {
                if !(*radius >= 0.0 && radius.is_finite()) {
                    return Err(Error::config("w_star.random_sphere.radius", format!("must be finite and >= 0, got {radius}")));
                }
                Ok(InputDistribution::SphereUniform { radius: 1.0, n: r }.sample(rng).scale(*radius))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSpec {
    Value(f64),
    Relative { frac_of_theta_star: f64 },
}

impl Default for ThetaSpec {
    fn default() -> Self {
        ThetaSpec::Value(0.0)
    }
}

fn default_strategy() -> XiStrategy {
    XiStrategy::SignedUniform
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    #[serde(default)]
    pub theta: ThetaSpec,
    #[serde(default = "default_strategy")]
    pub strategy: XiStrategy,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig { theta: ThetaSpec::default(), strategy: default_strategy() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoKeyword {
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoGamma {
    #[serde(default)]
    pub gamma: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSpec {
    Value(f64),
    Keyword(AutoKeyword),
    Auto {
        auto: AutoGamma,
    },
}

impl EtaSpec {
    fn step(&self) -> StepSize {
        match *self {
            EtaSpec::Value(eta) => StepSize::Explicit(eta),
            EtaSpec::Keyword(AutoKeyword::Auto) => StepSize::Auto { gamma: None },
            EtaSpec::Auto { auto } => StepSize::Auto { gamma: auto.gamma },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NamedInit {
    Zero,
    RandomSphere { radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitSpec {
    Explicit(Vec<f64>),
    Named(NamedInit),
}

impl InitSpec {
    fn point(&self) -> InitPoint {
        match self {
            InitSpec::Explicit(v) => InitPoint::Explicit(Vector::from_vec(v.clone())),
            InitSpec::Named(NamedInit::Zero) => InitPoint::Zero,
            InitSpec::Named(NamedInit::RandomSphere { radius }) => InitPoint::RandomSphere { radius: *radius },
        }
    }
}

fn default_batch() -> usize {
    1
}
fn default_eta() -> EtaSpec {
    EtaSpec::Keyword(AutoKeyword::Auto)
}
fn default_init() -> InitSpec {
    InitSpec::Named(NamedInit::RandomSphere { radius: 1.0 })
}
fn default_mc() -> usize {
    DEFAULT_MC_SAMPLES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_eta")]
    pub eta: EtaSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    #[serde(default = "default_init")]
    pub w_init: InitSpec,
    #[serde(default)]
    pub early_stop: bool,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            batch: default_batch(),
            eta: default_eta(),
            t_max: None,
            record_every: None,
            w_init: default_init(),
            early_stop: false,
            mc_samples: default_mc(),
        }
    }
}

fn default_trials() -> usize {
    100
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialPlan {
    #[serde(rename = "R", default = "default_trials")]
    pub trials: usize,
    pub eps: f64,
    pub delta: f64,
}

fn default_batches() -> usize {
    100_000
}
fn default_lemma2_samples() -> usize {
    1_000_000
}
fn default_pairs() -> usize {
    20
}
fn default_lemma3() -> usize {
    10_000
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(rename = "N", default = "default_batches")]
    pub batches: usize,
    #[serde(default = "default_lemma2_samples")]
    pub lemma2_samples: usize,
    #[serde(default = "default_pairs")]
    pub lemma2_pairs: usize,
    #[serde(default = "default_lemma3")]
    pub lemma3_instances: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            batches: default_batches(),
            lemma2_samples: default_lemma2_samples(),
            lemma2_pairs: default_pairs(),
            lemma3_instances: default_lemma3(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimalityConfig {
    pub w_adv: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<ThetaSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    /// Trials per grid point; defaults to the trial plan's `R`.
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Rescale a Gaussian σ along the `n` axis so the closed-form trade-off stays fixed.
    #[serde(default)]
    pub hold_gaussian_tradeoff: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub net: NetConfig,
    #[serde(rename = "M", alias = "m", default = "default_m")]
    pub m: MatrixSpec,
    pub dist: InputDistribution,
    #[serde(default = "default_beta")]
    pub beta: BetaProfile,
    pub w_star: WStarSpec,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default)]
    pub train: TrainSection,
    pub trials: TrialPlan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimality: Option<OptimalityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_m() -> MatrixSpec {
    MatrixSpec::Identity
}
fn default_beta() -> BetaProfile {
    BetaProfile::constant(0.0)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path.is_empty() { ".".to_string() } else { path }, e.into_inner().to_string())
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// `--seed`, then `TRONTIDE_SEED`, then the config value.
pub fn resolve_seed(cli: Option<u64>, env: Option<&str>, config: u64) -> Result<u64> {
    if let Some(s) = cli {
        return Ok(s);
    }
    match env {
        Some(raw) if !raw.trim().is_empty() => raw
            .trim()
            .parse()
            .map_err(|_| Error::config(SEED_ENV, format!("expected an unsigned 64-bit integer, got {raw:?}"))),
        _ => Ok(config),
    }
}

/// A fully built experiment: concrete matrices, optimum, attack and training settings.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub problem: Problem,
    pub attack: AttackSpec,
    pub train: TrainConfig,
    pub plan: TrialPlan,
}

impl Experiment {
    pub fn build(config: ExperimentConfig, seed: u64) -> Result<Self> {
        let setup = RngStream::new(seed).derive(streams::SETUP);
        let net = config.net.build(&mut setup.derive(2))?;
        let m = config.m.build(net.r(), net.n(), &mut setup.derive(1))?;
        if config.dist.dim() != net.n() {
            return Err(Error::config("dist.n", format!("distribution has n = {} but net.n = {}", config.dist.dim(), net.n())));
        }
        let w_star = config.w_star.build(net.r(), &mut setup.derive(3))?;
        let problem = Problem::new(net, m, config.dist.clone(), w_star)?;
        let plan = config.trials;
        if !(plan.eps >= 0.0 && plan.delta > 0.0 && plan.delta <= 1.0) {
            return Err(Error::config("trials", "need eps >= 0 and delta in (0, 1]"));
        }
        let mut train = TrainConfig::new(config.train.batch, config.train.eta.step(), plan.eps, plan.delta, seed);
        train.t_max = config.train.t_max;
        train.record_every = config.train.record_every;
        train.w_init = config.train.w_init.point();
        train.early_stop = config.train.early_stop;
        train.mc_samples = config.train.mc_samples;
        let mut attack = AttackSpec { theta: 0.0, profile: config.beta.clone(), strategy: config.attack.strategy.clone() };
        attack.theta = match config.attack.theta {
            ThetaSpec::Value(v) => v,
            ThetaSpec::Relative { frac_of_theta_star } => {
                let consts = problem.constants(&attack, train.batch, &mut theory_stream(seed), train.mc_samples)?;
                let c_to = theory::c_tradeoff(&consts)?;
                if !(c_to > 0.0) {
                    return Err(Error::infeasible(
                        "c_tradeoff > 0",
                        format!("attack.theta is relative to theta*, but c_tradeoff = {c_to:e}"),
                    ));
                }
                frac_of_theta_star * theory::theta_star(plan.eps, plan.delta, c_to)?
            }
        };
        attack.validate(&problem.net)?;
        Ok(Experiment { config, seed, problem, attack, train, plan })
    }

    pub fn constants(&self) -> Result<TheoryConstants> {
        self.problem.constants(&self.attack, self.train.batch, &mut theory_stream(self.seed), self.train.mc_samples)
    }

    pub fn w_init(&self) -> Result<Vector> {
        trainer::resolve_init(&self.train.w_init, self.problem.net.r(), self.seed)
    }

    pub fn gamma_override(&self) -> Option<f64> {
        match self.train.step {
            StepSize::Auto { gamma } => gamma,
            StepSize::Explicit(_) => None,
        }
    }

    pub fn theory_report(&self) -> Result<TheoryReport> {
        let consts = self.constants()?;
        let delta1 = self.w_init()?.dist_sq(&self.problem.w_star)?;
        Ok(TheoryReport::build(&consts, self.attack.theta, self.gamma_override(), self.plan.eps, self.plan.delta, delta1))
    }

    pub fn train(&self) -> Result<(RunPlan, Trace)> {
        trainer::run(&self.problem, &self.attack, &self.train)
    }

    pub fn run_trials(&self, trials: Option<usize>) -> Result<TrialSummary> {
        trainer::run_trials(&self.problem, &self.attack, &self.train, trials.unwrap_or(self.plan.trials))
    }
}

pub(crate) fn theory_stream(seed: u64) -> RngStream {
    RngStream::new(seed).derive(streams::THEORY)
}
