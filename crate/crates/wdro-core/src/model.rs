//! Loss models, their derivative structure, and synthetic data.
//!
//! A model supplies the loss l(u, beta) for one observation u together
//! with the derivative blocks the rest of the crate needs:
//!
//! ```text
//!     score      h(u, beta)  = D_beta l          (m entries)
//!     x-grad     g(u, beta)  = D_u l             (data_dim entries)
//!     jacobian   G(u, beta)  = D_u h             (data_dim x m)
//! ```
//!
//! Observations that contain a response coordinate mask it out of every
//! u-derivative: transport is only allowed to move the covariates, the
//! response stays pinned, so derivative flow through it must read as
//! zero even where the algebraic derivative is not. `LinearRegressionLoss`
//! stores u = (x_1 .. x_d, y) and zeroes the y row of all u-derivatives;
//! `LocationLoss` has no response and masks nothing.

use crate::linalg;
use crate::norms::NormSpec;
use crate::rng::{derive_stream, gaussian_at};
use thiserror::Error;

/// Stream tag for the predictor draws of a synthetic regression dataset.
pub const STREAM_PREDICTORS: u64 = 0x11;
/// Stream tag for the noise draws. Kept separate from the predictor
/// stream so changing the design correlation leaves the noise unchanged.
pub const STREAM_NOISE: u64 = 0x12;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("dataset storage length {len} is not n * data_dim = {n} * {data_dim}")]
    RaggedData { len: usize, n: usize, data_dim: usize },
    #[error("dataset must contain at least one observation")]
    EmptyData,
    #[error("parameter has {got} entries, model expects {expected}")]
    ParamDimMismatch { got: usize, expected: usize },
    #[error("noise variance must be nonnegative, got {0}")]
    NegativeVariance(f64),
    #[error("equicorrelation {rho} outside (-1/(d-1), 1) for d = {d}")]
    CorrelationOutOfRange { rho: f64, d: usize },
    #[error("regression needs at least one predictor")]
    NoPredictors,
}

/// Observations in flat row-major storage, one row per observation.
#[derive(Debug, Clone)]
pub struct Dataset {
    data: Vec<f64>,
    n: usize,
    data_dim: usize,
}

impl Dataset {
    pub fn new(data: Vec<f64>, n: usize, data_dim: usize) -> Result<Self, ModelError> {
        if n == 0 || data_dim == 0 {
            return Err(ModelError::EmptyData);
        }
        if data.len() != n * data_dim {
            return Err(ModelError::RaggedData {
                len: data.len(),
                n,
                data_dim,
            });
        }
        Ok(Self { data, n, data_dim })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.data_dim..(i + 1) * self.data_dim]
    }

    /// Mean of f over observations, accumulated pairwise per coordinate
    /// so the result does not depend on traversal order games.
    pub fn mean_map(&self, out_dim: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
        let mut per_coord: Vec<Vec<f64>> = vec![Vec::with_capacity(self.n); out_dim];
        for i in 0..self.n {
            let v = f(self.row(i));
            debug_assert_eq!(v.len(), out_dim);
            for (k, val) in v.into_iter().enumerate() {
                per_coord[k].push(val);
            }
        }
        per_coord
            .into_iter()
            .map(|col| linalg::pairwise_sum(&col) / self.n as f64)
            .collect()
    }
}

/// Shape of the admissible parameter set. Everything shipped here is
/// unconstrained; the variant exists so fitters can refuse models they
/// cannot handle rather than silently ignore a constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamDomain {
    Unbounded,
}

impl ParamDomain {
    #[inline]
    pub fn contains(&self, _beta: &[f64]) -> bool {
        match self {
            ParamDomain::Unbounded => true,
        }
    }
}

/// One observation's loss and its derivative blocks. All u-derivatives
/// come back with response coordinates already masked to zero.
pub trait LossModel {
    /// Number of parameter entries.
    fn param_dim(&self) -> usize;

    /// Number of coordinates in one observation row.
    fn data_dim(&self) -> usize;

    /// Number of score entries; equals `param_dim` for every model here.
    fn score_dim(&self) -> usize {
        self.param_dim()
    }

    fn domain(&self) -> ParamDomain {
        ParamDomain::Unbounded
    }

    fn loss(&self, u: &[f64], beta: &[f64]) -> f64;

    /// h(u, beta) = D_beta l, the estimating score.
    fn score(&self, u: &[f64], beta: &[f64]) -> Vec<f64>;

    /// D_u l with response coordinates masked, `data_dim` entries.
    fn x_grad(&self, u: &[f64], beta: &[f64]) -> Vec<f64>;

    /// G = D_u h, row-major data_dim x score_dim, G[j * m + k] = d h_k / d u_j,
    /// response rows masked.
    fn x_score_jacobian(&self, u: &[f64], beta: &[f64]) -> Vec<f64>;

    /// D_beta h = D_beta^2 l, row-major score_dim x score_dim.
    fn param_hessian(&self, u: &[f64], beta: &[f64]) -> Vec<f64>;

    /// D_u^2 l, row-major data_dim x data_dim, response rows and columns
    /// masked.
    fn x_hessian(&self, u: &[f64], beta: &[f64]) -> Vec<f64>;

    /// Closed-form worst-case objective over the transport ball of
    /// budget delta, when the model admits one. None means the caller
    /// must fall back to a dual search.
    fn worst_case_objective_closed_form(
        &self,
        _data: &Dataset,
        _beta: &[f64],
        _delta: f64,
        _norm: &NormSpec,
    ) -> Option<f64> {
        None
    }

    /// Plug-in estimate of cov h(U, beta) used for calibration draws.
    /// None selects the generic empirical score covariance; a model may
    /// return a structured estimate that exploits its form instead. Any
    /// consistent estimate preserves the coverage guarantee.
    fn score_covariance_estimate(&self, _data: &Dataset, _beta: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Square-loss linear regression, u = (x_1 .. x_d, y), l = (1/2)(y - beta.x)^2.
///
/// The y row/column of every u-derivative is masked. In particular the
/// score jacobian applied to xi reads (xi.x) beta - e xi on the
/// predictor block with e = y - beta.x.
#[derive(Debug, Clone, Copy)]
pub struct LinearRegressionLoss {
    d: usize,
}

impl LinearRegressionLoss {
    pub fn new(d: usize) -> Result<Self, ModelError> {
        if d == 0 {
            return Err(ModelError::NoPredictors);
        }
        Ok(Self { d })
    }

    #[inline]
    pub fn residual(&self, u: &[f64], beta: &[f64]) -> f64 {
        let (x, y) = self.split(u);
        y - linalg::dot(beta, x)
    }

    #[inline]
    fn split<'a>(&self, u: &'a [f64]) -> (&'a [f64], f64) {
        debug_assert_eq!(u.len(), self.d + 1);
        (&u[..self.d], u[self.d])
    }
}

impl LossModel for LinearRegressionLoss {
    fn param_dim(&self) -> usize {
        self.d
    }

    fn data_dim(&self) -> usize {
        self.d + 1
    }

    fn loss(&self, u: &[f64], beta: &[f64]) -> f64 {
        let e = self.residual(u, beta);
        0.5 * e * e
    }

    fn score(&self, u: &[f64], beta: &[f64]) -> Vec<f64> {
        let (x, _) = self.split(u);
        let e = self.residual(u, beta);
        x.iter().map(|&xk| -e * xk).collect()
    }

    fn x_grad(&self, u: &[f64], beta: &[f64]) -> Vec<f64> {
        let e = self.residual(u, beta);
        let mut g = vec![0.0; self.d + 1];
        for j in 0..self.d {
            g[j] = -e * beta[j];
        }
        // g[d] stays 0: the y entry is masked.
        g
    }

    fn x_score_jacobian(&self, u: &[f64], beta: &[f64]) -> Vec<f64> {
        let (x, _) = self.split(u);
        let e = self.residual(u, beta);
        let m = self.d;
        let mut jac = vec![0.0; (self.d + 1) * m];
        for j in 0..self.d {
            for k in 0..m {
                jac[j * m + k] = beta[j] * x[k];
            }
            jac[j * m + j] -= e;
        }
        // Row d (the y row) stays 0: masked.
        jac
    }

    fn param_hessian(&self, u: &[f64], _beta: &[f64]) -> Vec<f64> {
        let (x, _) = self.split(u);
        let mut h = vec![0.0; self.d * self.d];
        for j in 0..self.d {
            for k in 0..self.d {
                h[j * self.d + k] = x[j] * x[k];
            }
        }
        h
    }

    fn x_hessian(&self, _u: &[f64], beta: &[f64]) -> Vec<f64> {
        let dim = self.d + 1;
        let mut h = vec![0.0; dim * dim];
        for j in 0..self.d {
            for k in 0..self.d {
                h[j * dim + k] = beta[j] * beta[k];
            }
        }
        // y row and column stay 0: masked.
        h
    }

    /// (1/2)(sqrt(mean residual^2) + sqrt(delta) ||beta||_p)^2 with p the
    /// dual of the transport cost exponent.
    fn worst_case_objective_closed_form(
        &self,
        data: &Dataset,
        beta: &[f64],
        delta: f64,
        norm: &NormSpec,
    ) -> Option<f64> {
        let n = data.n();
        let sq: Vec<f64> = (0..n)
            .map(|i| {
                let e = self.residual(data.row(i), beta);
                e * e
            })
            .collect();
        let m2 = linalg::pairwise_sum(&sq) / n as f64;
        let root = m2.sqrt() + delta.sqrt() * norm.norm(beta);
        Some(0.5 * root * root)
    }

    /// Score is -e x. With noise independent of the design the covariance
    /// factorizes as (noise variance) x (design second moment), so the
    /// structured estimate sigma2_hat * C_hat replaces the raw fourth
    /// moment mean of e^2 x x'. Lower variance, and the calibration draws
    /// stay aligned with the curvature matrix used by the region map.
    fn score_covariance_estimate(&self, data: &Dataset, beta: &[f64]) -> Option<Vec<f64>> {
        let d = self.d;
        let sigma2 = data.mean_map(1, |row| {
            let e = self.residual(row, beta);
            vec![e * e]
        })[0];
        let mut xi = data.mean_map(d * d, |row| {
            let (x, _) = self.split(row);
            let mut c = vec![0.0; d * d];
            for j in 0..d {
                for k in 0..d {
                    c[j * d + k] = x[j] * x[k];
                }
            }
            c
        });
        for v in xi.iter_mut() {
            *v *= sigma2;
        }
        Some(xi)
    }
}

/// Mean estimation, u = x, l = (1/2)||beta - x||_2^2. No response
/// coordinate, so no masking; the score jacobian is constantly -I.
#[derive(Debug, Clone, Copy)]
pub struct LocationLoss {
    d: usize,
}

impl LocationLoss {
    pub fn new(d: usize) -> Result<Self, ModelError> {
        if d == 0 {
            return Err(ModelError::NoPredictors);
        }
        Ok(Self { d })
    }
}

impl LossModel for LocationLoss {
    fn param_dim(&self) -> usize {
        self.d
    }

    fn data_dim(&self) -> usize {
        self.d
    }

    fn loss(&self, u: &[f64], beta: &[f64]) -> f64 {
        let s: f64 = u
            .iter()
            .zip(beta)
            .map(|(x, b)| (b - x) * (b - x))
            .sum();
        0.5 * s
    }

    fn score(&self, u: &[f64], beta: &[f64]) -> Vec<f64> {
        beta.iter().zip(u).map(|(b, x)| b - x).collect()
    }

    fn x_grad(&self, u: &[f64], beta: &[f64]) -> Vec<f64> {
        u.iter().zip(beta).map(|(x, b)| x - b).collect()
    }

    fn x_score_jacobian(&self, _u: &[f64], _beta: &[f64]) -> Vec<f64> {
        let mut jac = vec![0.0; self.d * self.d];
        for j in 0..self.d {
            jac[j * self.d + j] = -1.0;
        }
        jac
    }

    fn param_hessian(&self, _u: &[f64], _beta: &[f64]) -> Vec<f64> {
        linalg::identity(self.d)
    }

    fn x_hessian(&self, _u: &[f64], _beta: &[f64]) -> Vec<f64> {
        linalg::identity(self.d)
    }
}

/// Synthetic design for the regression experiments: x is gaussian with
/// equicorrelated covariance, y = beta_star . x + sigma eps.
#[derive(Debug, Clone)]
pub struct GaussianRegressionSpec {
    pub n: usize,
    pub beta_star: Vec<f64>,
    pub rho: f64,
    pub sigma2: f64,
}

impl GaussianRegressionSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let d = self.beta_star.len();
        if d == 0 {
            return Err(ModelError::NoPredictors);
        }
        if self.n == 0 {
            return Err(ModelError::EmptyData);
        }
        if !(self.sigma2 >= 0.0) {
            return Err(ModelError::NegativeVariance(self.sigma2));
        }
        // Equicorrelation is positive definite iff rho in (-1/(d-1), 1);
        // for d = 1 any rho is vacuous but we keep the same open bound at 1.
        let lower = if d > 1 { -1.0 / (d as f64 - 1.0) } else { -1.0 };
        if !(self.rho > lower && self.rho < 1.0) {
            return Err(ModelError::CorrelationOutOfRange { rho: self.rho, d });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.beta_star.len()
    }

    /// The population design covariance (1 - rho) I + rho 11'.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim();
        let mut cov = vec![self.rho; d * d];
        for j in 0..d {
            cov[j * d + j] = 1.0;
        }
        cov
    }
}

/// Draws one regression dataset addressed purely by (seed, index):
/// predictor normals come from the stream tagged `STREAM_PREDICTORS` at
/// index i * d + j, noise from `STREAM_NOISE` at index i. Rows are
/// (x_1 .. x_d, y).
pub fn generate_regression_data(
    spec: &GaussianRegressionSpec,
    seed: u64,
) -> Result<Dataset, ModelError> {
    spec.validate()?;
    let d = spec.dim();
    let chol = linalg::cholesky_lower(&spec.covariance(), d)
        .expect("validated equicorrelation is positive definite");
    let key_x = derive_stream(seed, STREAM_PREDICTORS);
    let key_eps = derive_stream(seed, STREAM_NOISE);
    let sigma = spec.sigma2.sqrt();
    let mut data = Vec::with_capacity(spec.n * (d + 1));
    let mut z = vec![0.0; d];
    for i in 0..spec.n {
        for j in 0..d {
            z[j] = gaussian_at(key_x, (i * d + j) as u64);
        }
        let x = linalg::mat_vec(&chol, d, d, &z);
        let y = linalg::dot(&spec.beta_star, &x) + sigma * gaussian_at(key_eps, i as u64);
        data.extend_from_slice(&x);
        data.push(y);
    }
    Dataset::new(data, spec.n, d + 1)
}
