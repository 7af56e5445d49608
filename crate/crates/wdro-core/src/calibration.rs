//! Turning a confidence level into a transport budget.
//!
//! The region recipe needs three plug-ins at the fitted parameter: the
//! score-jacobian mean C_n, the score covariance Xi_n, and the
//! (1 - alpha)-quantile eta of the conjugate applied to a gaussian with
//! that covariance,
//!
//! ```text
//!     eta_alpha = quantile_{1-alpha} of phi*( Xi_bar Z ),   Z std normal,
//! ```
//!
//! estimated by Monte Carlo with a counter-addressed gaussian stream.
//! The implied budget is eta_alpha / n. A separate routine calibrates
//! the matrix of a Mahalanobis transport cost so that the robust region
//! reproduces the classical ellipse.

use crate::linalg;
use crate::model::{Dataset, LinearRegressionLoss, LossModel};
use crate::profile::{ProfileError, ProfileOperator};
use crate::rng::{derive_stream, gaussian_at};
use serde::Serialize;
use thiserror::Error;

/// Stream tag for calibration gaussians; draw b fills indices
/// b*d .. b*d+d-1 of the stream derived from the calibration seed.
pub const STREAM_CALIBRATION: u64 = 0x13;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("confidence level alpha must lie in (0, 1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("need at least 100 Monte Carlo draws, got {0}")]
    TooFewDraws(usize),
    #[error("covariance estimation needs at least 2 observations")]
    TooFewObservations,
    #[error("covariance factorization needs a positive semidefinite input; smallest eigenvalue {min_eigenvalue}")]
    IndefiniteCovariance { min_eigenvalue: f64 },
    #[error("calibration draw hit an unbounded conjugate: the empirical second moment of the score jacobians is not positive definite, violating the quadratic-growth assumption the calibration rests on ({0})")]
    AssumptionViolated(ProfileError),
    #[error("scalar transport-matrix ansatz leaves residual {residual}, above tolerance {tol}; the design does not admit a Mahalanobis cost matching the classical ellipse")]
    AnsatzResidual { residual: f64, tol: f64 },
    #[error("design second moment is singular; cannot calibrate a transport matrix")]
    SingularDesign,
}

/// A calibrated quantile with its Monte Carlo pedigree.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationResult {
    pub eta_alpha: f64,
    pub alpha: f64,
    pub mc_draws: usize,
    pub seed: u64,
    /// Order-statistic standard error: sqrt(a(1-a)/B) divided by a
    /// finite-difference density estimate at the quantile.
    pub quantile_se: f64,
}

/// C_n = mean of D_beta h over observations, symmetrized.
pub fn estimate_c<L: LossModel>(model: &L, data: &Dataset, beta_hat: &[f64]) -> Vec<f64> {
    let m = model.score_dim();
    let raw = data.mean_map(m * m, |row| model.param_hessian(row, beta_hat));
    linalg::symmetrize(&raw, m)
}

/// Empirical covariance of the scores h(u_i, beta_hat), 1/n normalized.
pub fn estimate_xi<L: LossModel>(
    model: &L,
    data: &Dataset,
    beta_hat: &[f64],
) -> Result<Vec<f64>, CalibrationError> {
    if data.n() < 2 {
        return Err(CalibrationError::TooFewObservations);
    }
    let m = model.score_dim();
    let mean = crate::profile::mean_score(model, data, beta_hat);
    let second = crate::profile::score_second_moment(model, data, beta_hat);
    let mut cov = vec![0.0; m * m];
    for a in 0..m {
        for b in 0..m {
            cov[a * m + b] = second[a * m + b] - mean[a] * mean[b];
        }
    }
    Ok(linalg::symmetrize(&cov, m))
}

/// Canonical factor Xi_bar with Xi_bar Xi_bar' = Xi: the symmetric PSD
/// square root. Eigenvalues slightly below zero (>= -1e-10 ||Xi||) are
/// clipped; anything lower is rejected as indefinite.
pub fn factorize_cov(xi: &[f64], m: usize) -> Result<Vec<f64>, CalibrationError> {
    let scale = linalg::max_abs(xi);
    let (values, _) = linalg::jacobi_sym_eigen(xi, m);
    let min_eigenvalue = values[0];
    if min_eigenvalue < -1e-10 * scale.max(1.0) {
        return Err(CalibrationError::IndefiniteCovariance { min_eigenvalue });
    }
    Ok(linalg::spectral_map(xi, m, |v| v.max(0.0).sqrt()))
}

/// Order statistic index for the (1-alpha) quantile: ceil((1-alpha) B),
/// 1-based.
fn quantile_index(alpha: f64, b: usize) -> usize {
    let k = ((1.0 - alpha) * b as f64).ceil() as usize;
    k.clamp(1, b)
}

/// Monte Carlo quantile of phi*(Xi_bar Z). Exact conjugates for smooth
/// exponents; the smoothed stand-in for p in {1, inf} (plot-grade, used
/// only by the no-guarantee region path).
pub fn calibrate_eta(
    op: &ProfileOperator,
    xi_bar: &[f64],
    alpha: f64,
    mc_draws: usize,
    seed: u64,
) -> Result<CalibrationResult, CalibrationError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CalibrationError::AlphaOutOfRange(alpha));
    }
    if mc_draws < 100 {
        return Err(CalibrationError::TooFewDraws(mc_draws));
    }
    let m = op.score_dim();
    let key = derive_stream(seed, STREAM_CALIBRATION);
    let p = op.norm().p();
    let boundary = p == 1.0 || p.is_infinite();
    let mut values = Vec::with_capacity(mc_draws);
    let mut z = vec![0.0; m];
    for b in 0..mc_draws {
        for j in 0..m {
            z[j] = gaussian_at(key, (b * m + j) as u64);
        }
        let zeta = linalg::mat_vec(xi_bar, m, m, &z);
        let value = if boundary {
            op.conjugate_smoothed(&zeta).map(|s| s.value)
        } else {
            op.conjugate(&zeta)
        };
        values.push(value.map_err(CalibrationError::AssumptionViolated)?);
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let k = quantile_index(alpha, mc_draws);
    let eta_alpha = values[k - 1];
    // Density at the quantile by a symmetric order-statistic window.
    let window = (mc_draws as f64).sqrt().ceil() as usize;
    let lo = k.saturating_sub(window).max(1);
    let hi = (k + window).min(mc_draws);
    let spread = values[hi - 1] - values[lo - 1];
    let quantile_se = if spread > 0.0 {
        let density = (hi - lo) as f64 / (mc_draws as f64 * spread);
        (alpha * (1.0 - alpha) / mc_draws as f64).sqrt() / density
    } else {
        0.0
    };
    Ok(CalibrationResult {
        eta_alpha,
        alpha,
        mc_draws,
        seed,
        quantile_se,
    })
}

/// Output of the Mahalanobis transport-cost calibration.
#[derive(Debug, Clone)]
pub struct MahalanobisCalibration {
    /// The cost matrix A (positive definite).
    pub a: Vec<f64>,
    /// The scalar in the ansatz A^-1 = c C_n.
    pub c: f64,
    /// Max-norm residual of the matrix equation after substitution.
    pub residual: f64,
    /// The induced quadratic-form matrix
    /// M_A = mean[(eI - x b')(c C_n)(eI - b x')]; the robust region
    /// under this cost is the p = 2 region with this matrix.
    pub m_a: Vec<f64>,
}

/// Calibrates the matrix A of a transport cost (u - w)' A (u - w) so
/// that the induced region equation
///
/// ```text
///     mean[(eI - x b') A^-1 (eI - b x')] = sigma2 C_n
/// ```
///
/// holds. The solve restricts to A^-1 = c C_n; the equation is then
/// linear in c, so the fixed point is reached in one projection step,
/// and the residual check catches any sample where the restriction is
/// wrong. At the least-squares fit the residual vanishes identically.
pub fn solve_mahalanobis_a(
    model: &LinearRegressionLoss,
    data: &Dataset,
    beta_hat: &[f64],
    sigma2_hat: f64,
) -> Result<MahalanobisCalibration, CalibrationError> {
    let d = model.param_dim();
    let c_n = estimate_c(model, data, beta_hat);
    let c_n_inv = linalg::invert(&c_n, d).ok_or(CalibrationError::SingularDesign)?;
    // K = mean[(eI - x b') C_n (eI - b x')]; the target is sigma2 C_n.
    let mut k = vec![0.0; d * d];
    for i in 0..data.n() {
        let row = data.row(i);
        let e = model.residual(row, beta_hat);
        let mut b_i = vec![0.0; d * d];
        for r in 0..d {
            for cidx in 0..d {
                b_i[r * d + cidx] = -row[r] * beta_hat[cidx];
            }
            b_i[r * d + r] += e;
        }
        let bc = linalg::mat_mul(&b_i, d, d, &c_n, d);
        let bt = linalg::transpose(&b_i, d, d);
        let full = linalg::mat_mul(&bc, d, d, &bt, d);
        for t in 0..d * d {
            k[t] += full[t];
        }
    }
    for v in k.iter_mut() {
        *v /= data.n() as f64;
    }
    let k_dot_c = linalg::dot(&k, &c_n);
    let c_dot_c = linalg::dot(&c_n, &c_n);
    if !(k_dot_c > 0.0) {
        return Err(CalibrationError::SingularDesign);
    }
    let c = sigma2_hat * c_dot_c / k_dot_c;
    let mut residual = 0.0f64;
    for t in 0..d * d {
        residual = residual.max((c * k[t] - sigma2_hat * c_n[t]).abs());
    }
    let tol = 1e-6 * (sigma2_hat * linalg::max_abs(&c_n)).max(1e-300);
    if residual > tol {
        return Err(CalibrationError::AnsatzResidual { residual, tol });
    }
    let a: Vec<f64> = c_n_inv.iter().map(|v| v / c).collect();
    let m_a: Vec<f64> = k.iter().map(|v| c * v).collect();
    Ok(MahalanobisCalibration { a, c, residual, m_a })
}
