//! Parity-symmetric input distributions, attack-probability profiles `β(x)`, and the
//! norm moments `m_k = E‖x‖^k` and `β_k = E[β(x)‖x‖^k]` for k = 1..4.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathcore::linalg::{Matrix, Vector};
use crate::mathcore::special::gamma_ratio;
use crate::mathcore::RngStream;

pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;
pub const MIN_MC_SAMPLES: usize = 1_000;
const MC_CHUNK: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputDistribution {
    Gaussian { sigma: f64, n: usize },
    #[serde(rename = "sphere")]
    SphereUniform { radius: f64, n: usize },
    #[serde(rename = "ball")]
    BallUniform { radius: f64, n: usize },
}

impl InputDistribution {
    pub fn validate(&self) -> Result<()> {
        let (scale, n, what) = match *self {
            InputDistribution::Gaussian { sigma, n } => (sigma, n, "sigma"),
            InputDistribution::SphereUniform { radius, n } | InputDistribution::BallUniform { radius, n } => {
                (radius, n, "radius")
            }
        };
        if n == 0 {
            return Err(Error::InvalidDimension("distribution dimension n must be >= 1".into()));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("{what} must be positive and finite, got {scale}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match *self {
            InputDistribution::Gaussian { n, .. }
            | InputDistribution::SphereUniform { n, .. }
            | InputDistribution::BallUniform { n, .. } => n,
        }
    }

    /// `sup ‖x‖` over the support, if finite.
    pub fn support_radius(&self) -> Option<f64> {
        match *self {
            InputDistribution::Gaussian { .. } => None,
            InputDistribution::SphereUniform { radius, .. } | InputDistribution::BallUniform { radius, .. } => {
                Some(radius)
            }
        }
    }

    pub fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        match *self {
            InputDistribution::Gaussian { sigma, .. } => {
                for v in out.iter_mut() {
                    *v = sigma * rng.std_normal();
                }
            }
            InputDistribution::SphereUniform { radius, .. } => {
                fill_unit_direction(rng, out);
                out.iter_mut().for_each(|v| *v *= radius);
            }
            InputDistribution::BallUniform { radius, n } => {
                fill_unit_direction(rng, out);
                let rho = radius * rng.uniform().powf(1.0 / n as f64);
                out.iter_mut().for_each(|v| *v *= rho);
            }
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vector {
        let mut x = vec![0.0; self.dim()];
        self.sample_into(rng, &mut x);
        Vector::from_vec(x)
    }

    pub fn sample_batch(&self, rng: &mut RngStream, b: usize) -> Result<Vec<Vector>> {
        if b == 0 {
            return Err(Error::InvalidDimension("batch size must be >= 1".into()));
        }
        Ok((0..b).map(|_| self.sample(rng)).collect())
    }

    /// Closed-form `E‖x‖^k` for k = 1..4.
    pub fn norm_moments(&self) -> Result<[f64; 4]> {
        self.validate()?;
        let mut m = [0.0; 4];
        for (i, mk) in m.iter_mut().enumerate() {
            let k = (i + 1) as f64;
            *mk = match *self {
                InputDistribution::Gaussian { sigma, n } => {
                    let nf = n as f64;
                    sigma.powf(k) * 2f64.powf(k / 2.0) * gamma_ratio((nf + k) / 2.0, nf / 2.0)?
                }
                InputDistribution::SphereUniform { radius, .. } => radius.powf(k),
                InputDistribution::BallUniform { radius, n } => radius.powf(k) * n as f64 / (n as f64 + k),
            };
        }
        Ok(m)
    }

    /// `Σ = E[x xᵀ]`, isotropic for every variant.
    pub fn second_moment_matrix(&self) -> Matrix {
        let n = self.dim();
        let s = match *self {
            InputDistribution::Gaussian { sigma, .. } => sigma * sigma,
            InputDistribution::SphereUniform { radius, n } => radius * radius / n as f64,
            InputDistribution::BallUniform { radius, n } => radius * radius / (n as f64 + 2.0),
        };
        Matrix::scaled_identity(n, n, s)
    }
}

fn fill_unit_direction(rng: &mut RngStream, out: &mut [f64]) {
    loop {
        rng.fill_std_normal(out);
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-300 {
            out.iter_mut().for_each(|v| *v /= norm);
            return;
        }
    }
}

/// Probability that the oracle corrupts the label at `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaProfile {
    #[serde(rename = "const")]
    Constant { value: f64 },
    NormThreshold { tau: f64, beta_lo: f64, beta_hi: f64 },
}

impl BetaProfile {
    pub fn constant(value: f64) -> Self {
        BetaProfile::Constant { value }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Domain(format!("beta {name} must lie in [0, 1], got {v}")))
            }
        };
        match *self {
            BetaProfile::Constant { value } => unit("value", value),
            BetaProfile::NormThreshold { tau, beta_lo, beta_hi } => {
                if !(tau >= 0.0 && tau.is_finite()) {
                    return Err(Error::Domain(format!("tau must be finite and >= 0, got {tau}")));
                }
                unit("beta_lo", beta_lo)?;
                unit("beta_hi", beta_hi)
            }
        }
    }

    #[inline]
    pub fn eval_norm(&self, norm: f64) -> f64 {
        match *self {
            BetaProfile::Constant { value } => value,
            BetaProfile::NormThreshold { tau, beta_lo, beta_hi } => {
                if norm > tau {
                    beta_hi
                } else {
                    beta_lo
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            BetaProfile::Constant { value } => *value,
            BetaProfile::NormThreshold { .. } => self.eval_norm(x.iter().map(|v| v * v).sum::<f64>().sqrt()),
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match *self {
            BetaProfile::Constant { value } => Some(value),
            BetaProfile::NormThreshold { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MomentSource {
    Analytic,
    MonteCarlo { samples: usize, m_se: [f64; 4], beta_se: [f64; 4] },
}

/// `m1..m4` and the β-weighted `β1..β4`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentSet {
    pub m: [f64; 4],
    pub beta: [f64; 4],
    pub source: MomentSource,
}

impl MomentSet {
    pub fn m1(&self) -> f64 {
        self.m[0]
    }
    pub fn m2(&self) -> f64 {
        self.m[1]
    }
    pub fn m3(&self) -> f64 {
        self.m[2]
    }
    pub fn m4(&self) -> f64 {
        self.m[3]
    }
    pub fn b1(&self) -> f64 {
        self.beta[0]
    }
    pub fn b2(&self) -> f64 {
        self.beta[1]
    }
    pub fn b3(&self) -> f64 {
        self.beta[2]
    }
    pub fn b4(&self) -> f64 {
        self.beta[3]
    }

    /// Cauchy–Schwarz chain and `0 <= β_k <= m_k`, with a relative tolerance.
    pub fn consistency_violations(&self, rel_tol: f64) -> Vec<String> {
        let [m1, m2, m3, m4] = self.m;
        let mut out = Vec::new();
        let le = |a: f64, b: f64| a <= b + rel_tol * b.abs().max(a.abs()).max(1e-300);
        if !le(m1 * m1, m2) {
            out.push(format!("m1^2 <= m2 fails: {} > {}", m1 * m1, m2));
        }
        if !le(m2 * m2, m4) {
            out.push(format!("m2^2 <= m4 fails: {} > {}", m2 * m2, m4));
        }
        if !le(m3 * m3, m2 * m4) {
            out.push(format!("m3^2 <= m2*m4 fails: {} > {}", m3 * m3, m2 * m4));
        }
        for k in 0..4 {
            if self.beta[k] < 0.0 || !le(self.beta[k], self.m[k]) {
                out.push(format!("0 <= beta{} <= m{} fails: {} vs {}", k + 1, k + 1, self.beta[k], self.m[k]));
            }
        }
        out
    }
}

pub fn moments_analytic(dist: &InputDistribution) -> Result<MomentSet> {
    Ok(MomentSet { m: dist.norm_moments()?, beta: [0.0; 4], source: MomentSource::Analytic })
}

#[derive(Clone, Copy, Default)]
struct PowerSums {
    m: [f64; 4],
    m_sq: [f64; 4],
    b: [f64; 4],
    b_sq: [f64; 4],
}

impl PowerSums {
    fn merge(mut self, o: &PowerSums) -> Self {
        for k in 0..4 {
            self.m[k] += o.m[k];
            self.m_sq[k] += o.m_sq[k];
            self.b[k] += o.b[k];
            self.b_sq[k] += o.b_sq[k];
        }
        self
    }
}

/// Chunked Monte Carlo over ordered substreams; the reduction order is fixed so the
/// result depends only on the seed, not on the thread count.
fn monte_carlo_sums(
    dist: &InputDistribution,
    profile: Option<&BetaProfile>,
    rng: &mut RngStream,
    samples: usize,
) -> PowerSums {
    let label = rng.next_u64();
    let base = rng.derive(label);
    let chunks = samples.div_ceil(MC_CHUNK);
    let n = dist.dim();
    let parts: Vec<PowerSums> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut local = base.derive(c as u64);
            let count = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut x = vec![0.0; n];
            let mut acc = PowerSums::default();
            for _ in 0..count {
                dist.sample_into(&mut local, &mut x);
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let beta = profile.map_or(0.0, |p| p.eval_norm(norm));
                let mut pw = 1.0;
                for k in 0..4 {
                    pw *= norm;
                    acc.m[k] += pw;
                    acc.m_sq[k] += pw * pw;
                    let bp = beta * pw;
                    acc.b[k] += bp;
                    acc.b_sq[k] += bp * bp;
                }
            }
            acc
        })
        .collect();
    parts.iter().fold(PowerSums::default(), |a, p| a.merge(p))
}

fn mean_and_se(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Empirical `m1..m4` with standard errors `s_k/√N`.
pub fn moments_monte_carlo(dist: &InputDistribution, rng: &mut RngStream, samples: usize) -> Result<MomentSet> {
    moment_set_monte_carlo(dist, None, rng, samples)
}

fn moment_set_monte_carlo(
    dist: &InputDistribution,
    profile: Option<&BetaProfile>,
    rng: &mut RngStream,
    samples: usize,
) -> Result<MomentSet> {
    dist.validate()?;
    if samples < MIN_MC_SAMPLES {
        return Err(Error::InvalidDimension(format!("Monte Carlo needs N >= {MIN_MC_SAMPLES}, got {samples}")));
    }
    let sums = monte_carlo_sums(dist, profile, rng, samples);
    let (mut m, mut m_se, mut beta, mut beta_se) = ([0.0; 4], [0.0; 4], [0.0; 4], [0.0; 4]);
    for k in 0..4 {
        (m[k], m_se[k]) = mean_and_se(sums.m[k], sums.m_sq[k], samples);
        (beta[k], beta_se[k]) = mean_and_se(sums.b[k], sums.b_sq[k], samples);
    }
    Ok(MomentSet { m, beta, source: MomentSource::MonteCarlo { samples, m_se, beta_se } })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BetaMoments {
    pub values: [f64; 4],
    /// `None` when exact.
    pub standard_errors: Option<[f64; 4]>,
}

/// `β_k = E[β(x)‖x‖^k]`. Exact (`β·m_k`) for constant profiles, Monte Carlo otherwise.
pub fn beta_moments(
    dist: &InputDistribution,
    profile: &BetaProfile,
    rng: &mut RngStream,
    samples: usize,
) -> Result<BetaMoments> {
    profile.validate()?;
    match profile.constant_value() {
        Some(beta) => {
            let m = dist.norm_moments()?;
            Ok(BetaMoments { values: m.map(|mk| beta * mk), standard_errors: None })
        }
        None => {
            let set = moment_set_monte_carlo(dist, Some(profile), rng, samples)?;
            let se = match set.source {
                MomentSource::MonteCarlo { beta_se, .. } => beta_se,
                MomentSource::Analytic => unreachable!("Monte Carlo path"),
            };
            Ok(BetaMoments { values: set.beta, standard_errors: Some(se) })
        }
    }
}

/// Analytic `m_k` plus `β_k`, where `β_k` is Monte Carlo only for non-constant profiles.
pub fn moment_set(
    dist: &InputDistribution,
    profile: &BetaProfile,
    rng: &mut RngStream,
    samples: usize,
) -> Result<MomentSet> {
    let m = dist.norm_moments()?;
    let b = beta_moments(dist, profile, rng, samples)?;
    let source = match b.standard_errors {
        None => MomentSource::Analytic,
        Some(beta_se) => MomentSource::MonteCarlo { samples, m_se: [0.0; 4], beta_se },
    };
    Ok(MomentSet { m, beta: b.values, source })
}
