//! Empirical risk minimization, robust minimization, and the
//! sensitivity statistic.
//!
//! The robust fitter minimizes the exact worst-case objective when the
//! model supplies it in square-root form,
//!
//! ```text
//!     r(beta) = sqrt(mean residual^2) + sqrt(delta) ||beta||_p,
//! ```
//!
//! and otherwise the penalized surrogate
//!
//! ```text
//!     F(beta) = mean loss + sqrt(delta) S_n(beta),
//! ```
//!
//! with S_n the sensitivity statistic. Both are convex; minimization is
//! damped Newton with backtracking, except at the two nonsmooth
//! exponents p in {1, inf}, where the square-root route switches to a
//! proximal gradient scheme. r is not differentiable at beta = 0 nor on
//! the interpolation set where the mean squared residual vanishes; both
//! places get explicit subdifferential checks instead of gradient
//! tests.

use crate::linalg;
use crate::model::{Dataset, LossModel};
use crate::norms::{self, NormSpec};
use serde::Serialize;
use thiserror::Error;

const MAX_NEWTON_ITERS: usize = 200;
const MAX_PROX_ITERS: usize = 50_000;
/// Below this l_p length an iterate is treated as exactly zero and the
/// subdifferential test replaces the gradient test.
const ZERO_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("transport budget must be nonnegative, got {0}")]
    NegativeRadius(f64),
    #[error(transparent)]
    Norm(#[from] norms::NormError),
    #[error("the sensitivity surrogate needs 1 < p < inf, got p = {0}; boundary exponents are only available through the exact square-root objective")]
    NonSmoothSurrogate(f64),
    #[error("this loss has no closed-form worst-case objective in square-root form")]
    SqrtObjectiveUnavailable,
    #[error("parameter has {got} entries, model expects {expected}")]
    ParamDimMismatch { got: usize, expected: usize },
}

/// Which objective `fit_dro` minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FitRoute {
    /// Exact worst-case objective in square-root form.
    ExactSqrt,
    /// Penalized surrogate: mean loss plus sqrt(delta) S_n.
    SensitivitySurrogate,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatorResult {
    pub beta_hat: Vec<f64>,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Stationarity measure at termination: gradient norm on smooth
    /// iterates, subdifferential gap at the nonsmooth points, proximal
    /// residual for the p in {1, inf} scheme.
    pub gradient_norm: f64,
    /// Set by `fit_dro`, absent for plain ERM.
    pub route: Option<FitRoute>,
}

/// Solves h d = -g, bumping the diagonal when the factorization fails
/// and falling back to steepest descent as a last resort.
fn descent_direction(h: &[f64], dim: usize, g: &[f64]) -> Vec<f64> {
    let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
    let trace: f64 = (0..dim).map(|i| h[i * dim + i]).sum();
    let mut bump = 0.0;
    for _ in 0..6 {
        let mut hb = h.to_vec();
        if bump > 0.0 {
            for i in 0..dim {
                hb[i * dim + i] += bump;
            }
        }
        if let Some(dir) = linalg::lu_solve(&hb, dim, &neg_g) {
            if linalg::dot(&dir, g) < 0.0 {
                return dir;
            }
        }
        bump = if bump == 0.0 {
            1e-10 * (trace.abs() / dim as f64).max(1e-10)
        } else {
            bump * 100.0
        };
    }
    neg_g
}

/// Armijo backtracking from unit step. Returns the accepted step and
/// new value, or None when no decrease is found above the floor.
fn backtrack(
    f: impl Fn(&[f64]) -> f64,
    beta: &[f64],
    dir: &[f64],
    f0: f64,
    slope: f64,
) -> Option<(Vec<f64>, f64)> {
    let mut step = 1.0;
    while step > 1e-14 {
        let cand: Vec<f64> = beta.iter().zip(dir).map(|(b, d)| b + step * d).collect();
        let fc = f(&cand);
        if fc <= f0 + 1e-4 * step * slope {
            return Some((cand, fc));
        }
        step *= 0.5;
    }
    None
}

/// Minimizes the empirical risk by damped Newton from the origin.
pub fn fit_erm<L: LossModel>(
    model: &L,
    data: &Dataset,
    tol: f64,
) -> Result<EstimatorResult, EstimatorError> {
    if !(tol > 0.0) {
        return Err(EstimatorError::BadTolerance(tol));
    }
    let d = model.param_dim();
    let mean_loss = |beta: &[f64]| {
        let vals: Vec<f64> = (0..data.n()).map(|i| model.loss(data.row(i), beta)).collect();
        linalg::pairwise_sum(&vals) / data.n() as f64
    };
    let mut beta = vec![0.0; d];
    let mut obj = mean_loss(&beta);
    let mut gnorm = f64::INFINITY;
    for iter in 0..MAX_NEWTON_ITERS {
        let grad = crate::profile::mean_score(model, data, &beta);
        gnorm = linalg::norm2(&grad);
        if gnorm <= tol {
            return Ok(EstimatorResult {
                beta_hat: beta,
                objective_value: obj,
                iterations: iter,
                converged: true,
                gradient_norm: gnorm,
                route: None,
            });
        }
        let hess = data.mean_map(d * d, |row| model.param_hessian(row, &beta));
        let dir = descent_direction(&hess, d, &grad);
        let slope = linalg::dot(&grad, &dir);
        match backtrack(mean_loss, &beta, &dir, obj, slope) {
            Some((next, fnext)) => {
                beta = next;
                obj = fnext;
            }
            None => break,
        }
    }
    Ok(EstimatorResult {
        beta_hat: beta,
        objective_value: obj,
        iterations: MAX_NEWTON_ITERS,
        converged: false,
        gradient_norm: gnorm,
        route: None,
    })
}

/// S_n(beta) = sqrt( mean ||D_u loss||_p^2 ), the plug-in sensitivity.
pub fn sensitivity<L: LossModel>(model: &L, data: &Dataset, beta: &[f64], norm: &NormSpec) -> f64 {
    let vals: Vec<f64> = (0..data.n())
        .map(|i| {
            let g = model.x_grad(data.row(i), beta);
            let t = norm.norm(&g);
            t * t
        })
        .collect();
    (linalg::pairwise_sum(&vals) / data.n() as f64).sqrt()
}

/// The exact worst-case expected loss over the transport ball, when the
/// model has it in closed form.
pub fn dro_objective_sqrt<L: LossModel>(
    model: &L,
    data: &Dataset,
    beta: &[f64],
    delta: f64,
    norm: &NormSpec,
) -> Result<f64, EstimatorError> {
    if !(delta >= 0.0) {
        return Err(EstimatorError::NegativeRadius(delta));
    }
    model
        .worst_case_objective_closed_form(data, beta, delta, norm)
        .ok_or(EstimatorError::SqrtObjectiveUnavailable)
}

/// Minimizes the worst-case objective at budget delta. Takes the exact
/// square-root route when the model provides it, else the sensitivity
/// surrogate; the result records which.
pub fn fit_dro<L: LossModel>(
    model: &L,
    data: &Dataset,
    delta: f64,
    norm: &NormSpec,
    tol: f64,
) -> Result<EstimatorResult, EstimatorError> {
    if !(tol > 0.0) {
        return Err(EstimatorError::BadTolerance(tol));
    }
    if !(delta >= 0.0) {
        return Err(EstimatorError::NegativeRadius(delta));
    }
    let probe = model.worst_case_objective_closed_form(data, &vec![0.0; model.param_dim()], delta, norm);
    let route = if probe.is_some() {
        FitRoute::ExactSqrt
    } else {
        FitRoute::SensitivitySurrogate
    };
    if route == FitRoute::SensitivitySurrogate && !(norm.p() > 1.0 && norm.p().is_finite()) {
        return Err(EstimatorError::NonSmoothSurrogate(norm.p()));
    }
    if delta == 0.0 {
        let mut res = fit_erm(model, data, tol)?;
        res.route = Some(route);
        return Ok(res);
    }
    let mut res = match route {
        FitRoute::ExactSqrt => {
            if norm.p() > 1.0 && norm.p().is_finite() {
                fit_sqrt_newton(model, data, delta, norm, tol)
            } else {
                fit_sqrt_proximal(model, data, delta, norm, tol)
            }
        }
        FitRoute::SensitivitySurrogate => fit_surrogate(model, data, delta, norm, tol),
    }?;
    res.route = Some(route);
    Ok(res)
}

/// Shared square-root-objective plumbing: m2(beta) = mean squared
/// residual expressed through the loss (2 mean loss), with gradient and
/// Hessian from the score and parameter Hessian.
struct SqrtParts<'a, L: LossModel> {
    model: &'a L,
    data: &'a Dataset,
}

impl<'a, L: LossModel> SqrtParts<'a, L> {
    fn m2(&self, beta: &[f64]) -> f64 {
        let vals: Vec<f64> = (0..self.data.n())
            .map(|i| 2.0 * self.model.loss(self.data.row(i), beta))
            .collect();
        linalg::pairwise_sum(&vals) / self.data.n() as f64
    }

    fn m2_grad(&self, beta: &[f64]) -> Vec<f64> {
        crate::profile::mean_score(self.model, self.data, beta)
            .into_iter()
            .map(|v| 2.0 * v)
            .collect()
    }

    fn m2_half_hess(&self, beta: &[f64]) -> Vec<f64> {
        let d = self.model.param_dim();
        self.data
            .mean_map(d * d, |row| self.model.param_hessian(row, beta))
    }
}

/// Hessian of ||beta||_p for 1 < p < inf:
/// (p-1)/t [ diag((|b_j|/t)^(p-2)) - w w' ], w the normalized gradient.
/// |b_j| is clamped below at 1e-10 t so p < 2 stays finite; the line
/// search, not this curvature model, owns correctness.
fn norm_hessian(beta: &[f64], p: f64, t: f64, w: &[f64]) -> Vec<f64> {
    let d = beta.len();
    let mut out = vec![0.0; d * d];
    for j in 0..d {
        let a = (beta[j].abs() / t).max(1e-10);
        out[j * d + j] = a.powf(p - 2.0);
    }
    for j in 0..d {
        for k in 0..d {
            out[j * d + k] = (p - 1.0) / t * (out[j * d + k] - w[j] * w[k]);
        }
    }
    out
}

/// Steepest-descent unit direction out of beta = 0 for the penalized
/// norm: the dual-norm attaining direction of -g, with the two
/// boundary exponents handled by their limiting shapes.
fn escape_direction(g: &[f64], norm: &NormSpec) -> Vec<f64> {
    let p = norm.p();
    if p == 1.0 {
        // Dual is the max norm: move along the steepest coordinate.
        let mut best = 0;
        for j in 1..g.len() {
            if g[j].abs() > g[best].abs() {
                best = j;
            }
        }
        let mut u = vec![0.0; g.len()];
        u[best] = -g[best].signum();
        return u;
    }
    if p.is_infinite() {
        // Dual is l1: the sign vector has unit max norm.
        return g.iter().map(|v| -v.signum()).collect();
    }
    let q = norm.q();
    let tq = norms::tp_map(g, q).expect("dual exponent in (1, inf)");
    let dual = norm.dual_norm(g);
    tq.iter().map(|v| -v / dual).collect()
}

fn fit_sqrt_newton<L: LossModel>(
    model: &L,
    data: &Dataset,
    delta: f64,
    norm: &NormSpec,
    tol: f64,
) -> Result<EstimatorResult, EstimatorError> {
    let d = model.param_dim();
    let s = delta.sqrt();
    let parts = SqrtParts { model, data };
    let r = |beta: &[f64]| parts.m2(beta).max(0.0).sqrt() + s * norm.norm(beta);
    let m2_scale = 1.0 + parts.m2(&vec![0.0; d]);
    let mut beta = vec![0.0; d];
    let mut robj = r(&beta);
    let mut gap = f64::INFINITY;
    let mut iters = 0;
    for iter in 0..MAX_NEWTON_ITERS {
        iters = iter;
        let t = norm.norm(&beta);
        let m2 = parts.m2(&beta);
        if t <= ZERO_THRESHOLD {
            // At the origin: 0 is optimal iff the dual norm of the
            // smooth gradient is inside the penalty slope.
            beta = vec![0.0; d];
            if m2 <= 1e-30 * m2_scale {
                // Perfect fit with zero parameter: global minimum.
                return Ok(finish_sqrt(model, data, beta, delta, norm, iter, true, 0.0));
            }
            let g0: Vec<f64> = parts.m2_grad(&beta).iter().map(|v| v / (2.0 * m2.sqrt())).collect();
            let dual = norm.dual_norm(&g0);
            gap = (dual - s).max(0.0);
            if gap <= tol {
                return Ok(finish_sqrt(model, data, beta, delta, norm, iter, true, gap));
            }
            let u = escape_direction(&g0, norm);
            let slope = -(dual - s);
            match backtrack(&r, &beta, &u, robj, slope) {
                Some((next, fnext)) => {
                    beta = next;
                    robj = fnext;
                    continue;
                }
                None => break,
            }
        }
        if m2 <= 1e-20 * m2_scale {
            // On the interpolation set the smooth part has a kink; the
            // point is optimal iff the penalty gradient fits inside the
            // dual ball of the residual quadratic.
            let w = norms::tp_map(&beta, norm.p())?.iter().map(|v| v / t).collect::<Vec<f64>>();
            let hc = parts.m2_half_hess(&beta);
            if let Some(z) = linalg::lu_solve(&hc, d, &w) {
                let dual_c = s * linalg::dot(&w, &z).max(0.0).sqrt();
                gap = (dual_c - 1.0).max(0.0);
                if gap <= 1e-9 {
                    return Ok(finish_sqrt(model, data, beta, delta, norm, iter, true, gap));
                }
            }
            let dir: Vec<f64> = w.iter().map(|v| -s * v).collect();
            match backtrack(&r, &beta, &dir, robj, -s * s * linalg::dot(&w, &w)) {
                Some((next, fnext)) => {
                    beta = next;
                    robj = fnext;
                    continue;
                }
                None => break,
            }
        }
        let sq = m2.sqrt();
        let g_sqrt: Vec<f64> = parts.m2_grad(&beta).iter().map(|v| v / (2.0 * sq)).collect();
        let w = norms::tp_map(&beta, norm.p())?.iter().map(|v| v / t).collect::<Vec<f64>>();
        let grad: Vec<f64> = g_sqrt.iter().zip(&w).map(|(a, b)| a + s * b).collect();
        gap = linalg::norm2(&grad);
        if gap <= tol {
            return Ok(finish_sqrt(model, data, beta, delta, norm, iter, true, gap));
        }
        let hc = parts.m2_half_hess(&beta);
        let mut hess = vec![0.0; d * d];
        for j in 0..d {
            for k in 0..d {
                hess[j * d + k] = (hc[j * d + k] - g_sqrt[j] * g_sqrt[k]) / sq;
            }
        }
        let hn = norm_hessian(&beta, norm.p(), t, &w);
        for k in 0..d * d {
            hess[k] += s * hn[k];
        }
        let dir = descent_direction(&hess, d, &grad);
        let slope = linalg::dot(&grad, &dir);
        match backtrack(&r, &beta, &dir, robj, slope) {
            Some((next, fnext)) => {
                beta = next;
                robj = fnext;
            }
            None => break,
        }
    }
    Ok(finish_sqrt(model, data, beta, delta, norm, iters, false, gap))
}

#[allow(clippy::too_many_arguments)]
fn finish_sqrt<L: LossModel>(
    model: &L,
    data: &Dataset,
    beta: Vec<f64>,
    delta: f64,
    norm: &NormSpec,
    iterations: usize,
    converged: bool,
    gap: f64,
) -> EstimatorResult {
    let objective = model
        .worst_case_objective_closed_form(data, &beta, delta, norm)
        .expect("square-root route requires the closed form");
    EstimatorResult {
        beta_hat: beta,
        objective_value: objective,
        iterations,
        converged,
        gradient_norm: gap,
        route: None,
    }
}

/// Euclidean projection onto the l1 ball of the given radius.
fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cum += m;
        let cand = (cum - radius) / (k as f64 + 1.0);
        if k + 1 == mags.len() || mags[k + 1] <= cand {
            theta = cand;
            break;
        }
    }
    v.iter()
        .map(|x| x.signum() * (x.abs() - theta).max(0.0))
        .collect()
}

/// Proximal map of step * ||.||_p for the boundary exponents.
fn prox_norm(v: &[f64], p: f64, step: f64) -> Vec<f64> {
    if p == 1.0 {
        return v
            .iter()
            .map(|x| x.signum() * (x.abs() - step).max(0.0))
            .collect();
    }
    // Max norm: Moreau decomposition against the l1 ball.
    let proj = project_l1_ball(&v.iter().map(|x| x / step).collect::<Vec<f64>>(), 1.0);
    v.iter().zip(&proj).map(|(x, pj)| x - step * pj).collect()
}

/// Proximal gradient on sqrt(m2) + s ||.||_p for p in {1, inf}, with
/// backtracking on the smooth part.
fn fit_sqrt_proximal<L: LossModel>(
    model: &L,
    data: &Dataset,
    delta: f64,
    norm: &NormSpec,
    tol: f64,
) -> Result<EstimatorResult, EstimatorError> {
    let d = model.param_dim();
    let s = delta.sqrt();
    let p = norm.p();
    let parts = SqrtParts { model, data };
    let smooth = |beta: &[f64]| parts.m2(beta).max(0.0).sqrt();
    let total = |beta: &[f64]| smooth(beta) + s * norm.norm(beta);
    let mut beta = vec![0.0; d];
    let mut l_est = 1.0;
    let mut residual = f64::INFINITY;
    for iter in 0..MAX_PROX_ITERS {
        let m2 = parts.m2(&beta);
        let g: Vec<f64> = if m2 <= 1e-30 {
            vec![0.0; d]
        } else {
            parts.m2_grad(&beta).iter().map(|v| v / (2.0 * m2.sqrt())).collect()
        };
        let f_beta = smooth(&beta);
        // Backtracking: find a step whose prox point satisfies the
        // quadratic upper bound of the smooth part.
        let mut next;
        loop {
            let trial: Vec<f64> = beta.iter().zip(&g).map(|(b, gi)| b - gi / l_est).collect();
            next = prox_norm(&trial, p, s / l_est);
            let diff: Vec<f64> = next.iter().zip(&beta).map(|(a, b)| a - b).collect();
            let quad = f_beta + linalg::dot(&g, &diff) + 0.5 * l_est * linalg::dot(&diff, &diff);
            if smooth(&next) <= quad + 1e-15 * (1.0 + f_beta) {
                break;
            }
            l_est *= 2.0;
            if l_est > 1e16 {
                break;
            }
        }
        let diff: Vec<f64> = next.iter().zip(&beta).map(|(a, b)| a - b).collect();
        residual = l_est * linalg::norm2(&diff);
        if total(&next) <= total(&beta) {
            beta = next;
        }
        if residual <= tol {
            return Ok(finish_sqrt(model, data, beta, delta, norm, iter, true, residual));
        }
        l_est = (l_est * 0.9).max(1e-10);
    }
    Ok(finish_sqrt(
        model,
        data,
        beta,
        delta,
        norm,
        MAX_PROX_ITERS,
        false,
        residual,
    ))
}

/// Damped Newton on mean loss + sqrt(delta) S_n(beta), the surrogate
/// route for losses without a closed-form worst case. The curvature
/// model for the penalty uses the p = 2 metric; descent is enforced by
/// the line search and convergence judged on the exact gradient.
fn fit_surrogate<L: LossModel>(
    model: &L,
    data: &Dataset,
    delta: f64,
    norm: &NormSpec,
    tol: f64,
) -> Result<EstimatorResult, EstimatorError> {
    let d = model.param_dim();
    let s = delta.sqrt();
    let objective = |beta: &[f64]| {
        let vals: Vec<f64> = (0..data.n()).map(|i| model.loss(data.row(i), beta)).collect();
        linalg::pairwise_sum(&vals) / data.n() as f64 + s * sensitivity(model, data, beta, norm)
    };
    let data_dim = model.data_dim();
    let mut beta = vec![0.0; d];
    let mut obj = objective(&beta);
    let mut gnorm = f64::INFINITY;
    let mut iters = 0;
    for iter in 0..MAX_NEWTON_ITERS {
        iters = iter;
        let sn = sensitivity(model, data, &beta, norm);
        let mut grad = crate::profile::mean_score(model, data, &beta);
        let mut sens_grad = vec![0.0; d];
        if sn > 1e-15 {
            for i in 0..data.n() {
                let row = data.row(i);
                let g = model.x_grad(row, &beta);
                let tp = norms::tp_map(&g, norm.p())?;
                let jac = model.x_score_jacobian(row, &beta);
                let pull = linalg::mat_t_vec(&jac, data_dim, d, &tp);
                for k in 0..d {
                    sens_grad[k] += pull[k];
                }
            }
            for v in sens_grad.iter_mut() {
                *v /= data.n() as f64 * sn;
            }
        }
        for k in 0..d {
            grad[k] += s * sens_grad[k];
        }
        gnorm = linalg::norm2(&grad);
        if gnorm <= tol {
            return Ok(EstimatorResult {
                beta_hat: beta,
                objective_value: obj,
                iterations: iter,
                converged: true,
                gradient_norm: gnorm,
                route: None,
            });
        }
        let mut hess = data.mean_map(d * d, |row| model.param_hessian(row, &beta));
        if sn > 1e-15 {
            let mut gram = vec![0.0; d * d];
            for i in 0..data.n() {
                let jac = model.x_score_jacobian(data.row(i), &beta);
                for j in 0..data_dim {
                    for a in 0..d {
                        let v = jac[j * d + a];
                        if v == 0.0 {
                            continue;
                        }
                        for b in 0..d {
                            gram[a * d + b] += v * jac[j * d + b];
                        }
                    }
                }
            }
            for v in gram.iter_mut() {
                *v /= data.n() as f64;
            }
            for a in 0..d {
                for b in 0..d {
                    hess[a * d + b] += s * (gram[a * d + b] - sens_grad[a] * sens_grad[b]) / sn;
                }
            }
        }
        let dir = descent_direction(&hess, d, &grad);
        let slope = linalg::dot(&grad, &dir);
        match backtrack(&objective, &beta, &dir, obj, slope) {
            Some((next, fnext)) => {
                beta = next;
                obj = fnext;
            }
            None => break,
        }
    }
    Ok(EstimatorResult {
        beta_hat: beta,
        objective_value: obj,
        iterations: iters,
        converged: false,
        gradient_norm: gnorm,
        route: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        generate_regression_data, GaussianRegressionSpec, LinearRegressionLoss, LocationLoss,
    };
    use crate::rng::CounterRng;

    fn norm2spec() -> NormSpec {
        NormSpec::from_p(2.0).unwrap()
    }

    // ==== empirical risk minimization ====

    #[test]
    fn erm_location_is_sample_mean() {
        let d = 3;
        let model = LocationLoss::new(d).unwrap();
        let mut rng = CounterRng::new(50);
        let raw: Vec<f64> = (0..40 * d).map(|_| rng.next_gaussian()).collect();
        let data = Dataset::new(raw, 40, d).unwrap();
        let fit = fit_erm(&model, &data, 1e-9).unwrap();
        assert!(fit.converged);
        let mean = data.mean_map(d, |row| row.to_vec());
        assert!(
            linalg::max_abs_diff(&fit.beta_hat, &mean) < 1e-12,
            "mean fit {:?} vs {:?}",
            fit.beta_hat,
            mean
        );
    }

    #[test]
    fn erm_recovers_truth_on_noiseless_data() {
        let spec = GaussianRegressionSpec {
            n: 50,
            beta_star: vec![0.8, -0.3],
            rho: 0.4,
            sigma2: 0.0,
        };
        let data = generate_regression_data(&spec, 60).unwrap();
        let model = LinearRegressionLoss::new(2).unwrap();
        let fit = fit_erm(&model, &data, 1e-9).unwrap();
        assert!(fit.converged && fit.gradient_norm <= 1e-9);
        assert!(linalg::max_abs_diff(&fit.beta_hat, &spec.beta_star) < 1e-8);
    }

    #[test]
    fn erm_matches_normal_equations() {
        let spec = GaussianRegressionSpec {
            n: 100,
            beta_star: vec![0.5, 0.1],
            rho: 0.7,
            sigma2: 1.0,
        };
        let data = generate_regression_data(&spec, 61).unwrap();
        let model = LinearRegressionLoss::new(2).unwrap();
        let fit = fit_erm(&model, &data, 1e-9).unwrap();
        // Independent route: solve the normal equations directly.
        let mut gram = [0.0f64; 4];
        let mut rhs = [0.0f64; 2];
        for i in 0..data.n() {
            let r = data.row(i);
            for a in 0..2 {
                rhs[a] += r[2] * r[a];
                for b in 0..2 {
                    gram[a * 2 + b] += r[a] * r[b];
                }
            }
        }
        let solved = linalg::lu_solve(&gram, 2, &rhs).unwrap();
        assert!(
            linalg::max_abs_diff(&fit.beta_hat, &solved) < 1e-8,
            "newton {:?} vs normal equations {:?}",
            fit.beta_hat,
            solved
        );
    }

    // ==== sensitivity ====

    #[test]
    fn sensitivity_factorizes_for_regression() {
        let spec = GaussianRegressionSpec {
            n: 80,
            beta_star: vec![0.5, 0.5],
            rho: 0.2,
            sigma2: 1.0,
        };
        let data = generate_regression_data(&spec, 62).unwrap();
        let model = LinearRegressionLoss::new(2).unwrap();
        let beta = [0.3, -0.6];
        let s = sensitivity(&model, &data, &beta, &norm2spec());
        let resid_sq: Vec<f64> = (0..data.n())
            .map(|i| {
                let e = model.residual(data.row(i), &beta);
                e * e
            })
            .collect();
        let m2 = linalg::pairwise_sum(&resid_sq) / data.n() as f64;
        let expect = (m2 * linalg::dot(&beta, &beta)).sqrt();
        assert!(
            (s * s - expect * expect).abs() < 1e-10,
            "S_n^2 = {} vs ||beta||^2 m2 = {}",
            s * s,
            expect * expect
        );
    }

    #[test]
    fn sensitivity_location_and_perfect_fit() {
        let d = 2;
        let model = LocationLoss::new(d).unwrap();
        let raw = vec![1.0, 2.0, 3.0, 4.0];
        let data = Dataset::new(raw, 2, d).unwrap();
        let beta = [0.0, 0.0];
        let s = sensitivity(&model, &data, &beta, &norm2spec());
        let expect = ((1.0 + 4.0 + 9.0 + 16.0) / 2.0f64).sqrt();
        assert!((s - expect).abs() < 1e-12);

        // Perfect regression fit has zero sensitivity.
        let spec = GaussianRegressionSpec {
            n: 30,
            beta_star: vec![1.0, 0.0],
            rho: 0.0,
            sigma2: 0.0,
        };
        let rdata = generate_regression_data(&spec, 63).unwrap();
        let rmodel = LinearRegressionLoss::new(2).unwrap();
        assert!(sensitivity(&rmodel, &rdata, &[1.0, 0.0], &norm2spec()) < 1e-12);
    }

    // ==== the sqrt objective ====

    #[test]
    fn sqrt_objective_special_points() {
        let spec = GaussianRegressionSpec {
            n: 40,
            beta_star: vec![0.5, 0.5],
            rho: 0.0,
            sigma2: 1.0,
        };
        let data = generate_regression_data(&spec, 64).unwrap();
        let model = LinearRegressionLoss::new(2).unwrap();
        let beta = [0.2, 0.4];
        let at_zero_delta = dro_objective_sqrt(&model, &data, &beta, 0.0, &norm2spec()).unwrap();
        let losses: Vec<f64> = (0..data.n()).map(|i| model.loss(data.row(i), &beta)).collect();
        let risk = linalg::pairwise_sum(&losses) / data.n() as f64;
        assert!((at_zero_delta - risk).abs() < 1e-12);

        // beta = 0 ignores delta entirely.
        let a = dro_objective_sqrt(&model, &data, &[0.0, 0.0], 0.0, &norm2spec()).unwrap();
        let b = dro_objective_sqrt(&model, &data, &[0.0, 0.0], 5.0, &norm2spec()).unwrap();
        assert_eq!(a, b);

        let loc = LocationLoss::new(2).unwrap();
        let ldata = Dataset::new(vec![0.0; 4], 2, 2).unwrap();
        assert_eq!(
            dro_objective_sqrt(&loc, &ldata, &[0.0, 0.0], 0.1, &norm2spec()).unwrap_err(),
            EstimatorError::SqrtObjectiveUnavailable
        );
    }

    // ==== robust fitting ====

    #[test]
    fn dro_at_zero_budget_is_erm() {
        let spec = GaussianRegressionSpec {
            n: 70,
            beta_star: vec![0.5, 0.5],
            rho: 0.3,
            sigma2: 1.0,
        };
        let data = generate_regression_data(&spec, 65).unwrap();
        let model = LinearRegressionLoss::new(2).unwrap();
        let erm = fit_erm(&model, &data, 1e-9).unwrap();
        let dro = fit_dro(&model, &data, 0.0, &norm2spec(), 1e-9).unwrap();
        assert_eq!(dro.route, Some(FitRoute::ExactSqrt));
        assert!(linalg::max_abs_diff(&erm.beta_hat, &dro.beta_hat) < 1e-9);
    }

    #[test]
    fn dro_satisfies_stationarity_and_shrinks() {
        let spec = GaussianRegressionSpec {
            n: 100,
            beta_star: vec![0.5, 0.5],
            rho: 0.95,
            sigma2: 1.0,
        };
        let data = generate_regression_data(&spec, 66).unwrap();
        let model = LinearRegressionLoss::new(2).unwrap();
        let erm = fit_erm(&model, &data, 1e-9).unwrap();
        let delta = 0.06; // roughly the calibrated scale at n=100
        let dro = fit_dro(&model, &data, delta, &norm2spec(), 1e-9).unwrap();
        assert!(dro.converged, "gap {}", dro.gradient_norm);
        assert!(
            linalg::norm2(&dro.beta_hat) < linalg::norm2(&erm.beta_hat),
            "robust fit should shrink: {:?} vs {:?}",
            dro.beta_hat,
            erm.beta_hat
        );
        // The reported objective is the closed-form worst case at the
        // minimizer and must beat the ERM point.
        let at_erm = dro_objective_sqrt(&model, &data, &erm.beta_hat, delta, &norm2spec()).unwrap();
        assert!(dro.objective_value <= at_erm + 1e-12);
    }

    #[test]
    fn dro_returns_exact_zero_under_huge_budget() {
        let spec = GaussianRegressionSpec {
            n: 50,
            beta_star: vec![0.5, 0.5],
            rho: 0.0,
            sigma2: 1.0,
        };
        let data = generate_regression_data(&spec, 67).unwrap();
        let model = LinearRegressionLoss::new(2).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let norm = NormSpec::from_p(p).unwrap();
            let fit = fit_dro(&model, &data, 50.0, &norm, 1e-9).unwrap();
            assert!(fit.converged);
            assert_eq!(fit.beta_hat, vec![0.0, 0.0], "p = {p} should hit exact zero");
        }
    }

    #[test]
    fn dro_location_surrogate_keeps_the_mean() {
        let d = 2;
        let model = LocationLoss::new(d).unwrap();
        let mut rng = CounterRng::new(68);
        let raw: Vec<f64> = (0..60 * d).map(|_| rng.next_gaussian()).collect();
        let data = Dataset::new(raw, 60, d).unwrap();
        let fit = fit_dro(&model, &data, 0.5, &norm2spec(), 1e-9).unwrap();
        assert_eq!(fit.route, Some(FitRoute::SensitivitySurrogate));
        assert!(fit.converged);
        let mean = data.mean_map(d, |row| row.to_vec());
        assert!(
            linalg::max_abs_diff(&fit.beta_hat, &mean) < 1e-6,
            "robust location fit {:?} strays from the mean {:?}",
            fit.beta_hat,
            mean
        );
    }

    #[test]
    fn surrogate_rejects_boundary_exponents() {
        let model = LocationLoss::new(2).unwrap();
        let data = Dataset::new(vec![0.1, 0.2, 0.3, 0.4], 2, 2).unwrap();
        let err = fit_dro(&model, &data, 0.5, &NormSpec::from_p(1.0).unwrap(), 1e-9).unwrap_err();
        assert_eq!(err, EstimatorError::NonSmoothSurrogate(1.0));
    }

    #[test]
    fn routes_agree_at_moderate_sample_size() {
        let spec = GaussianRegressionSpec {
            n: 400,
            beta_star: vec![0.5, 0.5],
            rho: 0.0,
            sigma2: 1.0,
        };
        let data = generate_regression_data(&spec, 69).unwrap();
        let model = LinearRegressionLoss::new(2).unwrap();
        let delta = 0.06 * 100.0 / 400.0;
        let exact = fit_dro(&model, &data, delta, &norm2spec(), 1e-9).unwrap();
        let surrogate = fit_surrogate(&model, &data, delta, &norm2spec(), 1e-9).unwrap();
        let gap = linalg::max_abs_diff(&exact.beta_hat, &surrogate.beta_hat);
        assert!(
            gap <= 5.0 / (400.0f64).sqrt(),
            "route gap {gap} too large at n=400"
        );
    }

    #[test]
    fn noiseless_data_with_small_budget_returns_truth() {
        let spec = GaussianRegressionSpec {
            n: 50,
            beta_star: vec![0.5, 0.5],
            rho: 0.0,
            sigma2: 0.0,
        };
        let data = generate_regression_data(&spec, 70).unwrap();
        let model = LinearRegressionLoss::new(2).unwrap();
        let fit = fit_dro(&model, &data, 1e-4, &norm2spec(), 1e-9).unwrap();
        assert!(fit.converged);
        assert!(
            linalg::max_abs_diff(&fit.beta_hat, &spec.beta_star) < 1e-6,
            "interpolation point should be optimal for small budgets, got {:?}",
            fit.beta_hat
        );
    }

    #[test]
    fn l1_route_soft_thresholds_to_sparsity() {
        let spec = GaussianRegressionSpec {
            n: 120,
            beta_star: vec![1.0, 0.05],
            rho: 0.0,
            sigma2: 1.0,
        };
        let data = generate_regression_data(&spec, 71).unwrap();
        let model = LinearRegressionLoss::new(2).unwrap();
        let norm = NormSpec::from_p(1.0).unwrap();
        let zero_fit = fit_dro(&model, &data, 0.0, &norm, 1e-8).unwrap();
        let fit = fit_dro(&model, &data, 0.08, &norm, 1e-8).unwrap();
        assert!(fit.converged, "residual {}", fit.gradient_norm);
        assert_eq!(fit.beta_hat[1], 0.0, "weak coordinate should be exactly zero");
        assert!(fit.beta_hat[0] > 0.5, "strong coordinate survives");
        assert!(fit.beta_hat[0] < zero_fit.beta_hat[0], "and shrinks");
        let max_fit = fit_dro(&model, &data, 0.05, &NormSpec::from_p(f64::INFINITY).unwrap(), 1e-8)
            .unwrap();
        assert!(max_fit.converged);
        assert!(linalg::norm2(&max_fit.beta_hat) < linalg::norm2(&zero_fit.beta_hat));
    }
}
