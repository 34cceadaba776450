//! Single-filter depth-2 networks `f_w(x) = (1/k) Σ σ(wᵀ A_i x)` with an α-leaky ReLU σ,
//! and constructors for sensing families and full-rank `M` matrices.

use crate::error::{Error, Result};
use crate::mathcore::linalg::{dot, lambda_max_gram, smallest_singular_value, Matrix, Vector};
use crate::mathcore::RngStream;

#[inline]
pub fn leaky_relu(y: f64, leak_alpha: f64) -> f64 {
    if y >= 0.0 {
        y
    } else {
        leak_alpha * y
    }
}

/// The k sensing matrices `A_i` (each r×n) with cached mean and `λ3`.
#[derive(Clone, Debug)]
pub struct SensingFamily {
    matrices: Vec<Matrix>,
    mean: Matrix,
    lambda3: f64,
}

impl SensingFamily {
    pub fn new(matrices: Vec<Matrix>) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::InvalidDimension("sensing family needs at least one matrix".into()))?;
        let shape = first.shape();
        let mut sum = Matrix::zeros(shape.0, shape.1);
        let mut lmax_sum = 0.0;
        for (i, a) in matrices.iter().enumerate() {
            if a.shape() != shape {
                return Err(Error::shape(
                    "sensing family",
                    format!("member {i} is {:?}, expected {:?}", a.shape(), shape),
                ));
            }
            a.ensure_finite()?;
            sum = sum.add(a)?;
            lmax_sum += lambda_max_gram(a)?;
        }
        let k = matrices.len() as f64;
        Ok(SensingFamily { mean: sum.scale(1.0 / k), lambda3: lmax_sum / k, matrices })
    }

    /// The single-gate family `{I_n}`.
    pub fn identity(n: usize) -> Self {
        // λ_max(I) = 1 exactly.
        SensingFamily { matrices: vec![Matrix::identity(n)], mean: Matrix::identity(n), lambda3: 1.0 }
    }

    /// `{M - jC, M + jC : j = 1..half_width}`; the mean is exactly `M`.
    pub fn build_symmetric(m: &Matrix, c: &Matrix, half_width: usize) -> Result<Self> {
        if half_width == 0 {
            return Err(Error::InvalidDimension("half_width must be positive".into()));
        }
        if m.shape() != c.shape() {
            return Err(Error::shape("build_symmetric", format!("M is {:?}, C is {:?}", m.shape(), c.shape())));
        }
        let mut members = Vec::with_capacity(2 * half_width);
        for j in (1..=half_width).rev() {
            members.push(m.sub(&c.scale(j as f64))?);
        }
        for j in 1..=half_width {
            members.push(m.add(&c.scale(j as f64))?);
        }
        let mut fam = Self::new(members)?;
        // The ±jC pairs cancel in exact arithmetic; keep M itself as the mean.
        fam.mean = m.clone();
        Ok(fam)
    }

    /// Convolutional family: member i selects input coordinates `windows[i]`, so row j of
    /// `A_i` has a single 1 in column `windows[i][j]`.
    pub fn convolutional(n: usize, windows: &[Vec<usize>]) -> Result<Self> {
        let r = windows.first().map_or(0, Vec::len);
        if r == 0 || n == 0 {
            return Err(Error::InvalidDimension("convolution windows must be non-empty".into()));
        }
        let mut members = Vec::with_capacity(windows.len());
        for (i, win) in windows.iter().enumerate() {
            if win.len() != r {
                return Err(Error::shape("convolutional", format!("window {i} has length {}, expected {r}", win.len())));
            }
            let mut seen = vec![false; n];
            let mut a = Matrix::zeros(r, n);
            for (row, &col) in win.iter().enumerate() {
                if col >= n {
                    return Err(Error::InvalidDimension(format!("window {i} index {col} out of range for n={n}")));
                }
                if std::mem::replace(&mut seen[col], true) {
                    return Err(Error::InvalidDimension(format!("window {i} repeats column {col}")));
                }
                a.set(row, col, 1.0);
            }
            members.push(a);
        }
        Self::new(members)
    }

    pub fn k(&self) -> usize {
        self.matrices.len()
    }

    pub fn r(&self) -> usize {
        self.mean.rows()
    }

    pub fn n(&self) -> usize {
        self.mean.cols()
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    pub fn mean(&self) -> &Matrix {
        &self.mean
    }

    /// `(1/k) Σ λ_max(A_i A_iᵀ)`
    pub fn lambda3(&self) -> f64 {
        self.lambda3
    }

    /// True for the single-gate family `{I_n}`.
    pub fn is_identity_gate(&self) -> bool {
        self.k() == 1 && self.r() == self.n() && self.matrices[0] == Matrix::identity(self.n())
    }

    /// `max_i λ_max(A_i A_iᵀ)`
    pub fn max_member_lambda(&self) -> Result<f64> {
        self.matrices.iter().map(lambda_max_gram).try_fold(0.0_f64, |acc, v| Ok(acc.max(v?)))
    }
}

#[derive(Clone, Debug)]
pub struct NetSpec {
    leak_alpha: f64,
    sensing: SensingFamily,
}

impl NetSpec {
    pub fn new(leak_alpha: f64, sensing: SensingFamily) -> Result<Self> {
        if !(0.0..=1.0).contains(&leak_alpha) {
            return Err(Error::Domain(format!("leak_alpha must lie in [0, 1], got {leak_alpha}")));
        }
        Ok(NetSpec { leak_alpha, sensing })
    }

    /// `F_{1,α,{I_n}}`: a single leaky-ReLU gate.
    pub fn single_gate(n: usize, leak_alpha: f64) -> Result<Self> {
        Self::new(leak_alpha, SensingFamily::identity(n))
    }

    pub fn k(&self) -> usize {
        self.sensing.k()
    }

    pub fn r(&self) -> usize {
        self.sensing.r()
    }

    pub fn n(&self) -> usize {
        self.sensing.n()
    }

    pub fn leak_alpha(&self) -> f64 {
        self.leak_alpha
    }

    pub fn sensing(&self) -> &SensingFamily {
        &self.sensing
    }

    pub fn predictor(&self, w: &Vector) -> Result<Predictor> {
        if w.len() != self.r() {
            return Err(Error::shape("predictor", format!("filter has length {}, net expects r={}", w.len(), self.r())));
        }
        if !w.is_finite() {
            return Err(Error::Numeric("filter has non-finite entries".into()));
        }
        let projections = self
            .sensing
            .matrices()
            .iter()
            .map(|a| a.tr_matvec(w).map(Vector::into_vec))
            .collect::<Result<Vec<_>>>()?;
        Ok(Predictor { projections, leak_alpha: self.leak_alpha, n: self.n() })
    }

    pub fn forward(&self, w: &Vector, x: &Vector) -> Result<f64> {
        self.predictor(w)?.eval(x)
    }

    /// Pointwise Lipschitz bound on the squared output gap between two filters:
    /// returns `(lhs, rhs) = ((f_{w1}(x) - f_{w2}(x))², (1+α)² λ3 ‖w1-w2‖² ‖x‖²)`.
    pub fn pointwise_sq_diff_bound(&self, w1: &Vector, w2: &Vector, x: &Vector) -> Result<(f64, f64)> {
        let gap = self.forward(w1, x)? - self.forward(w2, x)?;
        let rhs = (1.0 + self.leak_alpha).powi(2) * self.sensing.lambda3() * w1.dist_sq(w2)? * x.norm_sq();
        Ok((gap * gap, rhs))
    }
}

/// `f_w` with the projections `A_iᵀ w` precomputed, so each evaluation costs O(kn).
#[derive(Clone, Debug)]
pub struct Predictor {
    projections: Vec<Vec<f64>>,
    leak_alpha: f64,
    n: usize,
}

impl Predictor {
    pub fn eval(&self, x: &Vector) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::shape("forward", format!("input has length {}, net expects n={}", x.len(), self.n)));
        }
        let y = self.eval_slice(x.as_slice());
        if !y.is_finite() {
            return Err(Error::Numeric("network output is not finite".into()));
        }
        Ok(y)
    }

    /// Re-targets the cached projections to a new filter of the same net, without allocating.
    pub fn refresh(&mut self, net: &NetSpec, w: &[f64]) {
        debug_assert_eq!(w.len(), net.r());
        for (proj, a) in self.projections.iter_mut().zip(net.sensing.matrices()) {
            a.tr_matvec_into(w, proj);
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn eval_slice(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.projections.iter().map(|u| leaky_relu(dot(u, x), self.leak_alpha)).sum();
        sum / self.projections.len() as f64
    }
}

/// Full-rank r×n matrix whose left r×r block is a Wishart draw `Σ_{i≤dof} g_i g_iᵀ` and
/// whose remaining columns are fresh standard normals.
pub fn sample_full_rank_m(rng: &mut RngStream, r: usize, n: usize, wishart_dof: usize) -> Result<Matrix> {
    sample_full_rank_m_with_tol(rng, r, n, wishart_dof, 1e-8)
}

pub(crate) const FULL_RANK_RESAMPLES: usize = 5;

pub fn sample_full_rank_m_with_tol(
    rng: &mut RngStream,
    r: usize,
    n: usize,
    wishart_dof: usize,
    min_singular: f64,
) -> Result<Matrix> {
    if r == 0 || r > n {
        return Err(Error::InvalidDimension(format!("need 1 <= r <= n, got r={r}, n={n}")));
    }
    if wishart_dof < r {
        return Err(Error::InvalidDimension(format!("Wishart degrees of freedom {wishart_dof} < r={r}")));
    }
    let mut last = 0.0;
    for _ in 0..=FULL_RANK_RESAMPLES {
        let mut m = Matrix::zeros(r, n);
        let mut g = vec![0.0; r];
        for _ in 0..wishart_dof {
            rng.fill_std_normal(&mut g);
            for i in 0..r {
                for j in 0..r {
                    m.set(i, j, m.get(i, j) + g[i] * g[j]);
                }
            }
        }
        for i in 0..r {
            for j in r..n {
                m.set(i, j, rng.std_normal());
            }
        }
        last = smallest_singular_value(&m)?;
        if last > min_singular {
            return Ok(m);
        }
    }
    Err(Error::Numeric(format!(
        "sampled M stayed rank deficient after {FULL_RANK_RESAMPLES} resamples (smallest singular value {last:e})"
    )))
}
