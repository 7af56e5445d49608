//! The transport-price quadratic form phi, its convex conjugate, and the
//! empirical profile function built from them.
//!
//! For a fitted parameter the per-observation score jacobians G_i
//! determine
//!
//! ```text
//!     phi(xi)  = (1 / 4n) sum_i || G_i xi ||_p^2
//!     phi*(z)  = sup_xi { z . xi - phi(xi) }
//! ```
//!
//! phi prices, to second order, how cheaply mass can be transported to
//! tilt the mean score in a given direction; its conjugate prices how
//! far a mean score sits from zero. Both are degree-2 homogeneous in
//! their natural scaling: phi*(t z) = t^2 phi*(z).
//!
//! For p = 2 the conjugate is the explicit quadratic z . M^-1 z with
//! M = (1/n) sum_i G_i' G_i. For 1 < p < inf it is computed by an
//! accelerated gradient ascent with backtracking curvature estimates
//! and momentum restarts. For p in {1, inf} the exact conjugate is a
//! nonsmooth program this crate does not solve to tolerance; a smoothed
//! stand-in is provided for plotting only.

use crate::linalg;
use crate::model::{Dataset, LossModel};
use crate::norms::{self, NormSpec};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("score second moment matrix is singular; enable ridge_jitter to proceed anyway")]
    SingularSecondMoment,
    #[error("conjugate is unbounded along a direction the quadratic form does not price")]
    UnboundedConjugate,
    #[error("conjugate ascent failed to reach tolerance within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("exact conjugate needs 1 < p < inf, got p = {0}; use the smoothed variant")]
    ExactConjugateUnavailable(f64),
    #[error("smoothed conjugate is only for p in {{1, inf}}, got p = {0}")]
    SmoothingNotApplicable(f64),
    #[error("profile shortcut needs a score jacobian constant across observations; max deviation {max_dev}")]
    NonConstantJacobian { max_dev: f64 },
    #[error("argument has {got} entries, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("score-jacobian mean matrix is singular; support values need its inverse. Collect more data or regularize the design")]
    SingularCurvature,
}

/// Knobs for conjugate computation. Defaults match the shipped
/// experiments; `ridge_jitter` opts into a trace-scaled diagonal bump
/// instead of refusing singular second moments.
#[derive(Debug, Clone, Copy)]
pub struct ProfileOptions {
    pub ridge_jitter: bool,
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            ridge_jitter: false,
            grad_tol: 1e-9,
            max_iters: 200_000,
        }
    }
}

/// Result of an iterative conjugate evaluation.
#[derive(Debug, Clone)]
pub struct ConjugateSolve {
    pub value: f64,
    pub maximizer: Vec<f64>,
    pub iterations: usize,
}

enum Smoothing {
    Exact,
    AbsHyperbola { mu: f64 },
    LogSumExp { mu: f64 },
}

impl Smoothing {
    fn mu(&self) -> Option<f64> {
        match self {
            Smoothing::Exact => None,
            Smoothing::AbsHyperbola { mu } | Smoothing::LogSumExp { mu } => Some(*mu),
        }
    }
}

/// phi and phi* for one model at one parameter value, with the score
/// jacobians cached per observation.
#[derive(Debug)]
pub struct ProfileOperator {
    jacobians: Vec<f64>,
    n: usize,
    data_dim: usize,
    m: usize,
    norm: NormSpec,
    options: ProfileOptions,
    second_moment: Vec<f64>,
    second_moment_inv: Option<Vec<f64>>,
}

impl ProfileOperator {
    pub fn new<L: LossModel>(
        model: &L,
        data: &Dataset,
        beta: &[f64],
        norm: NormSpec,
        options: ProfileOptions,
    ) -> Result<Self, ProfileError> {
        if beta.len() != model.param_dim() {
            return Err(ProfileError::DimensionMismatch {
                got: beta.len(),
                expected: model.param_dim(),
            });
        }
        let n = data.n();
        let data_dim = model.data_dim();
        let m = model.score_dim();
        let mut jacobians = Vec::with_capacity(n * data_dim * m);
        for i in 0..n {
            jacobians.extend_from_slice(&model.x_score_jacobian(data.row(i), beta));
        }
        Ok(Self::from_jacobians(jacobians, n, data_dim, m, norm, options))
    }

    /// Builds directly from per-observation jacobian blocks (each
    /// data_dim x m, row-major, concatenated). This is the synthetic
    /// entry point: tests and specialized transport costs supply their
    /// own blocks instead of differentiating a loss.
    pub fn from_jacobians(
        jacobians: Vec<f64>,
        n: usize,
        data_dim: usize,
        m: usize,
        norm: NormSpec,
        options: ProfileOptions,
    ) -> Self {
        assert_eq!(jacobians.len(), n * data_dim * m, "ragged jacobian storage");
        assert!(n > 0, "need at least one block");
        let mut second_moment = vec![0.0; m * m];
        for i in 0..n {
            let g = &jacobians[i * data_dim * m..(i + 1) * data_dim * m];
            for j in 0..data_dim {
                for a in 0..m {
                    let gja = g[j * m + a];
                    if gja == 0.0 {
                        continue;
                    }
                    for b in 0..m {
                        second_moment[a * m + b] += gja * g[j * m + b];
                    }
                }
            }
        }
        for v in second_moment.iter_mut() {
            *v /= n as f64;
        }
        second_moment = linalg::symmetrize(&second_moment, m);
        let mut inv_input = second_moment.clone();
        if options.ridge_jitter {
            let trace: f64 = (0..m).map(|i| second_moment[i * m + i]).sum();
            let bump = 1e-10 * trace / m as f64;
            for i in 0..m {
                inv_input[i * m + i] += bump;
            }
        }
        let second_moment_inv = linalg::invert(&inv_input, m).map(|inv| linalg::symmetrize(&inv, m));
        Self {
            jacobians,
            n,
            data_dim,
            m,
            norm,
            options,
            second_moment,
            second_moment_inv,
        }
    }

    #[inline]
    pub fn score_dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn norm(&self) -> NormSpec {
        self.norm
    }

    /// M = (1/n) sum_i G_i' G_i, m x m.
    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    fn jacobian(&self, i: usize) -> &[f64] {
        let stride = self.data_dim * self.m;
        &self.jacobians[i * stride..(i + 1) * stride]
    }

    /// phi(xi), exact for every p including 1 and inf.
    pub fn phi(&self, xi: &[f64]) -> f64 {
        self.phi_mode(xi, &Smoothing::Exact)
    }

    fn phi_mode(&self, xi: &[f64], mode: &Smoothing) -> f64 {
        debug_assert_eq!(xi.len(), self.m);
        let mut acc = 0.0;
        for i in 0..self.n {
            let v = linalg::mat_vec(self.jacobian(i), self.data_dim, self.m, xi);
            let t = match mode {
                Smoothing::Exact => self.norm.norm(&v),
                Smoothing::AbsHyperbola { mu } => {
                    v.iter().map(|x| (x * x + mu * mu).sqrt() - mu).sum()
                }
                Smoothing::LogSumExp { mu } => logsumexp_max(&v, *mu),
            };
            acc += t * t;
        }
        acc / (4.0 * self.n as f64)
    }

    fn phi_grad_mode(&self, xi: &[f64], mode: &Smoothing) -> Vec<f64> {
        let mut grad = vec![0.0; self.m];
        for i in 0..self.n {
            let g = self.jacobian(i);
            let v = linalg::mat_vec(g, self.data_dim, self.m, xi);
            // Each term contributes G' (t * grad t) with t the (smoothed)
            // norm of v; for the exact branch t * grad t = T_p(v).
            let w = match mode {
                Smoothing::Exact => {
                    norms::tp_map(&v, self.norm.p()).expect("exact gradient needs 1 < p < inf")
                }
                Smoothing::AbsHyperbola { mu } => {
                    let t: f64 = v.iter().map(|x| (x * x + mu * mu).sqrt() - mu).sum();
                    v.iter().map(|x| t * x / (x * x + mu * mu).sqrt()).collect()
                }
                Smoothing::LogSumExp { mu } => {
                    let t = logsumexp_max(&v, *mu);
                    logsumexp_grad(&v, *mu).into_iter().map(|g| t * g).collect()
                }
            };
            let pull = linalg::mat_t_vec(g, self.data_dim, self.m, &w);
            for k in 0..self.m {
                grad[k] += pull[k];
            }
        }
        for v in grad.iter_mut() {
            *v /= 2.0 * self.n as f64;
        }
        grad
    }

    /// Hessian of phi at xi for the exact finite-p branch, m x m.
    /// Per observation the norm-squared Hessian splits into a diagonal
    /// piece and a rank-one piece in the normalized magnitudes
    /// a_j = |v_j| / ||v||_p:
    ///
    ///   (p-1) diag(a_j^{p-2}) + (2-p) b b',   b_j = a_j^{p-1} sgn v_j,
    ///
    /// pulled back through the observation jacobian. For p < 2 the
    /// diagonal blows up on the axes; entries are clamped at 1e12,
    /// which only raises the diagonal and keeps the matrix positive
    /// semidefinite.
    fn phi_hessian(&self, xi: &[f64]) -> Vec<f64> {
        let p = self.norm.p();
        let m = self.m;
        let mut hess = vec![0.0; m * m];
        let mut u = vec![0.0; m];
        for i in 0..self.n {
            let g = self.jacobian(i);
            let v = linalg::mat_vec(g, self.data_dim, m, xi);
            let s = self.norm.norm(&v);
            if s == 0.0 {
                continue;
            }
            for entry in u.iter_mut() {
                *entry = 0.0;
            }
            for j in 0..self.data_dim {
                let row = &g[j * m..(j + 1) * m];
                let a = v[j].abs() / s;
                let d = if p == 2.0 {
                    1.0
                } else {
                    ((p - 1.0) * a.powf(p - 2.0)).min(1e12)
                };
                if d != 0.0 {
                    for r in 0..m {
                        if row[r] == 0.0 {
                            continue;
                        }
                        let dr = d * row[r];
                        for c in 0..m {
                            hess[r * m + c] += dr * row[c];
                        }
                    }
                }
                if p != 2.0 {
                    let b = a.powf(p - 1.0) * v[j].signum();
                    if b != 0.0 {
                        for r in 0..m {
                            u[r] += b * row[r];
                        }
                    }
                }
            }
            if p != 2.0 {
                let coef = 2.0 - p;
                for r in 0..m {
                    let cr = coef * u[r];
                    for c in 0..m {
                        hess[r * m + c] += cr * u[c];
                    }
                }
            }
        }
        for h in hess.iter_mut() {
            *h /= 2.0 * self.n as f64;
        }
        linalg::symmetrize(&hess, m)
    }

    /// Damped-Newton refinement for the exact conjugate. The first
    /// order ascent localizes the maximizer but its gradient tail is
    /// slow when the second moment is ill conditioned or, for p > 2,
    /// when the maximizer sits near a degenerate axis of the norm;
    /// Newton steps contract those tails in a handful of iterations. A
    /// step is accepted on objective decrease or on a strict
    /// gradient-norm decrease: near the optimum the objective change
    /// falls below float resolution while the gradient stays
    /// informative. Returns the refined point and whether the gradient
    /// target was met.
    fn newton_polish(&self, zeta: &[f64], x0: &[f64], tol: f64) -> (Vec<f64>, bool) {
        let m = self.m;
        let f = |xi: &[f64]| self.phi_mode(xi, &Smoothing::Exact) - linalg::dot(zeta, xi);
        let grad = |xi: &[f64]| {
            let mut g = self.phi_grad_mode(xi, &Smoothing::Exact);
            for k in 0..m {
                g[k] -= zeta[k];
            }
            g
        };
        let mut x = x0.to_vec();
        let mut fx = f(&x);
        let mut gx = grad(&x);
        let mut gn = linalg::norm2(&gx);
        let mut damp = 1e-10;
        for _ in 0..150 {
            if gn <= tol {
                return (x, true);
            }
            let hess = self.phi_hessian(&x);
            let hscale = (0..m)
                .map(|k| hess[k * m + k].abs())
                .fold(0.0f64, f64::max)
                .max(1e-300);
            let rhs: Vec<f64> = gx.iter().map(|g| -g).collect();
            let mut stepped = false;
            while damp <= 1e18 {
                let mut hd = hess.clone();
                for k in 0..m {
                    hd[k * m + k] += damp * hscale;
                }
                if let Some(s) = linalg::lu_solve(&hd, m, &rhs) {
                    let xn: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a + b).collect();
                    let fxn = f(&xn);
                    if fxn.is_finite() {
                        let gxn = grad(&xn);
                        let gnn = linalg::norm2(&gxn);
                        if fxn < fx || gnn <= 0.999 * gn {
                            x = xn;
                            fx = fxn;
                            gx = gxn;
                            gn = gnn;
                            damp = (damp * 0.25).max(1e-14);
                            stepped = true;
                            break;
                        }
                    }
                }
                damp *= 8.0;
            }
            if !stepped {
                return (x, gn <= tol);
            }
        }
        (x, gn <= tol)
    }

    /// phi*(z). Closed form for p = 2, accelerated ascent for other
    /// finite p > 1, error for p in {1, inf}.
    pub fn conjugate(&self, zeta: &[f64]) -> Result<f64, ProfileError> {
        if zeta.len() != self.m {
            return Err(ProfileError::DimensionMismatch {
                got: zeta.len(),
                expected: self.m,
            });
        }
        if self.norm.p() == 2.0 {
            let inv = self
                .second_moment_inv
                .as_ref()
                .ok_or(ProfileError::SingularSecondMoment)?;
            let mz = linalg::mat_vec(inv, self.m, self.m, zeta);
            return Ok(linalg::dot(zeta, &mz));
        }
        self.conjugate_via_ascent(zeta).map(|s| s.value)
    }

    /// The iterative conjugate path, available at every finite p > 1.
    /// For p = 2 it must agree with the closed form; the acceptance
    /// suite holds that agreement to 1e-6 relative.
    pub fn conjugate_via_ascent(&self, zeta: &[f64]) -> Result<ConjugateSolve, ProfileError> {
        let p = self.norm.p();
        if !(p > 1.0) || p.is_infinite() {
            return Err(ProfileError::ExactConjugateUnavailable(p));
        }
        self.ascend(zeta, &Smoothing::Exact)
    }

    /// Smoothed conjugate for p in {1, inf}. The smoothing scale is
    /// 1e-6 (1 + ||z||), fine enough for plots, not for certificates.
    /// Solved by continuation: coarse smoothing first, then sharpened
    /// in decades with warm starts. The maximizer often sits on a kink
    /// of the unsmoothed norm, where the curvature grows like 1/mu; a
    /// cold start at the final mu can stall there.
    pub fn conjugate_smoothed(&self, zeta: &[f64]) -> Result<ConjugateSolve, ProfileError> {
        let p = self.norm.p();
        let mu_final = 1e-6 * (1.0 + linalg::norm2(zeta));
        let make = |mu: f64| -> Result<Smoothing, ProfileError> {
            if p == 1.0 {
                Ok(Smoothing::AbsHyperbola { mu })
            } else if p.is_infinite() {
                Ok(Smoothing::LogSumExp { mu })
            } else {
                Err(ProfileError::SmoothingNotApplicable(p))
            }
        };
        let mut solve = self.ascend_from(zeta, &make(mu_final * 1e4)?, vec![0.0; self.m])?;
        let mut total_iters = solve.iterations;
        for stage in [1e2, 1.0] {
            solve = self.ascend_from(zeta, &make(mu_final * stage)?, solve.maximizer)?;
            total_iters += solve.iterations;
        }
        solve.iterations = total_iters;
        Ok(solve)
    }

    /// Minimizes f(xi) = phi(xi) - z . xi by accelerated gradient with
    /// backtracking and function-value restarts; phi*(z) = -min f.
    fn ascend(&self, zeta: &[f64], mode: &Smoothing) -> Result<ConjugateSolve, ProfileError> {
        self.ascend_from(zeta, mode, vec![0.0; self.m])
    }

    fn ascend_from(
        &self,
        zeta: &[f64],
        mode: &Smoothing,
        x0: Vec<f64>,
    ) -> Result<ConjugateSolve, ProfileError> {
        let scale = 1.0 + linalg::norm2(zeta);
        // Smoothed runs stop at the sqrt(mu) gradient scale: the value
        // already carries an O(mu) smoothing bias, and near a kink the
        // curvature is 1/mu, putting tighter targets below what float
        // gradients resolve.
        let tol = match mode.mu() {
            None => self.options.grad_tol * scale,
            Some(mu) => self.options.grad_tol.max(0.1 * mu.sqrt()) * scale,
        };
        let f = |xi: &[f64]| self.phi_mode(xi, mode) - linalg::dot(zeta, xi);
        let mut x = x0;
        let mut y = x.clone();
        let mut fx = f(&x);
        let mut t: f64 = 1.0;
        let mut l_est = 1.0;
        for iter in 0..self.options.max_iters {
            let mut gy = self.phi_grad_mode(&y, mode);
            for k in 0..self.m {
                gy[k] -= zeta[k];
            }
            let gnorm = linalg::norm2(&gy);
            if gnorm <= tol {
                let value = -f(&y);
                return Ok(ConjugateSolve {
                    value,
                    maximizer: y,
                    iterations: iter,
                });
            }
            let fy = f(&y);
            // Backtracking on the descent lemma.
            let mut x_new;
            let mut fx_new;
            loop {
                x_new = y
                    .iter()
                    .zip(&gy)
                    .map(|(yi, gi)| yi - gi / l_est)
                    .collect::<Vec<f64>>();
                fx_new = f(&x_new);
                let step_sq: f64 = x_new
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let lin: f64 = gy
                    .iter()
                    .zip(x_new.iter().zip(&y))
                    .map(|(g, (a, b))| g * (a - b))
                    .sum();
                if fx_new <= fy + lin + 0.5 * l_est * step_sq + 1e-15 * fy.abs() {
                    break;
                }
                l_est *= 2.0;
                if l_est > 1e18 {
                    return Err(ProfileError::NoConvergence { iterations: iter });
                }
            }
            if fx_new > fx {
                // Momentum overshoot: drop it and continue from x_new.
                t = 1.0;
                y = x_new.clone();
            } else {
                let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let coef = (t - 1.0) / t_new;
                y = x_new
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| a + coef * (a - b))
                    .collect();
                t = t_new;
            }
            x = x_new;
            fx = fx_new;
            if linalg::norm2(&x) >= 1e6 && fx < 0.0 {
                // Iterates escape to infinity with the objective still
                // improving: the conjugate has no finite value here.
                return Err(ProfileError::UnboundedConjugate);
            }
            l_est = (l_est * 0.9).max(1e-12);
            // First-order tails are slow on ill-conditioned or, for
            // p > 2, axis-degenerate problems; hand the localized
            // iterate to Newton periodically. A failed polish is
            // cheap, so the handoff comes early.
            if matches!(mode, Smoothing::Exact) && (iter + 1) % 400 == 0 {
                let (px, hit) = self.newton_polish(zeta, &x, tol);
                let pf = f(&px);
                if hit {
                    return Ok(ConjugateSolve {
                        value: -pf,
                        maximizer: px,
                        iterations: iter + 1,
                    });
                }
                if pf < fx {
                    x = px;
                    fx = pf;
                    y = x.clone();
                    t = 1.0;
                }
            }
        }
        Err(ProfileError::NoConvergence {
            iterations: self.options.max_iters,
        })
    }
}

/// mu-scale softmax of the entrywise absolute values, zero at the
/// origin. Used only by the smoothed max-norm path.
fn logsumexp_max(v: &[f64], mu: f64) -> f64 {
    let a = v.iter().fold(0.0f64, |m, x| m.max(x.abs() / mu));
    let z: f64 = v
        .iter()
        .map(|x| (x / mu - a).exp() + (-x / mu - a).exp())
        .sum();
    mu * (a + z.ln()) - mu * ((2 * v.len()) as f64).ln()
}

fn logsumexp_grad(v: &[f64], mu: f64) -> Vec<f64> {
    let a = v.iter().fold(0.0f64, |m, x| m.max(x.abs() / mu));
    let terms: Vec<(f64, f64)> = v
        .iter()
        .map(|x| ((x / mu - a).exp(), (-x / mu - a).exp()))
        .collect();
    let z: f64 = terms.iter().map(|(p, q)| p + q).sum();
    terms.iter().map(|(p, q)| (p - q) / z).collect()
}

/// Mean score (1/n) sum_i h(u_i, beta).
pub fn mean_score<L: LossModel>(model: &L, data: &Dataset, beta: &[f64]) -> Vec<f64> {
    data.mean_map(model.score_dim(), |row| model.score(row, beta))
}

/// Score second moment (1/n) sum_i h_i h_i', m x m.
pub fn score_second_moment<L: LossModel>(model: &L, data: &Dataset, beta: &[f64]) -> Vec<f64> {
    let m = model.score_dim();
    data.mean_map(m * m, |row| {
        let h = model.score(row, beta);
        let mut outer = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                outer[a * m + b] = h[a] * h[b];
            }
        }
        outer
    })
}

/// Empirical profile value phi*( mean score at beta ), the exact
/// transport price of making beta a stationary point, for models whose
/// score jacobian does not depend on the observation. Models with
/// observation-dependent jacobians are refused: for them this quantity
/// is only an asymptotic approximation, not the profile itself.
pub fn empirical_profile_value<L: LossModel>(
    model: &L,
    data: &Dataset,
    beta: &[f64],
    norm: NormSpec,
    options: ProfileOptions,
) -> Result<f64, ProfileError> {
    let op = ProfileOperator::new(model, data, beta, norm, options)?;
    let stride = model.data_dim() * model.score_dim();
    let first = &op.jacobians[..stride];
    let mut max_dev = 0.0f64;
    for i in 1..data.n() {
        max_dev = max_dev.max(linalg::max_abs_diff(first, op.jacobian(i)));
    }
    if max_dev > 1e-10 {
        return Err(ProfileError::NonConstantJacobian { max_dev });
    }
    op.conjugate(&mean_score(model, data, beta))
}

/// Outcome of a level-set membership query. Unbounded conjugates are
/// reported as their own case rather than folded into non-membership,
/// so callers can surface the violated assumption.
#[derive(Debug, Clone, PartialEq)]
pub enum MembershipOutcome {
    Member(f64),
    NonMember(f64),
    UnboundedConjugate,
}

impl MembershipOutcome {
    pub fn is_member(&self) -> bool {
        matches!(self, MembershipOutcome::Member(_))
    }
}

/// The sublevel set { u : phi*(C u) <= eta } of the conjugate pushed
/// through a curvature matrix C. This is the body of a robust
/// confidence region before centering and scaling.
#[derive(Debug)]
pub struct LevelSet {
    operator: ProfileOperator,
    c: Vec<f64>,
    c_inv: Option<Vec<f64>>,
    eta: f64,
}

impl LevelSet {
    /// `c` is the m x m curvature matrix; `eta` the threshold.
    pub fn new(operator: ProfileOperator, c: Vec<f64>, eta: f64) -> Self {
        let m = operator.score_dim();
        assert_eq!(c.len(), m * m, "curvature matrix must be {m} x {m}");
        assert!(eta >= 0.0 && eta.is_finite(), "threshold must be finite and nonnegative");
        let c_inv = linalg::invert(&c, m);
        Self { operator, c, c_inv, eta }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn operator(&self) -> &ProfileOperator {
        &self.operator
    }

    pub fn curvature(&self) -> &[f64] {
        &self.c
    }

    /// Membership of u: phi*(C u) <= eta. Exact conjugate for smooth
    /// exponents; the smoothed stand-in for p in {1, inf} (plot-grade).
    /// Iteration failures are treated as unbounded: the point cannot be
    /// certified a member.
    pub fn membership(&self, u: &[f64]) -> MembershipOutcome {
        let m = self.operator.score_dim();
        let zeta = linalg::mat_vec(&self.c, m, m, u);
        let p = self.operator.norm().p();
        let value = if p == 1.0 || p.is_infinite() {
            self.operator.conjugate_smoothed(&zeta).map(|s| s.value)
        } else {
            self.operator.conjugate(&zeta)
        };
        match value {
            Ok(v) if v <= self.eta => MembershipOutcome::Member(v),
            Ok(v) => MembershipOutcome::NonMember(v),
            Err(_) => MembershipOutcome::UnboundedConjugate,
        }
    }

    /// Support function h(v) = sup { v . u : u in the set }. Because
    /// phi* is degree-2 homogeneous and conjugate to phi, this is the
    /// closed form 2 sqrt(eta phi(C^-1 v)) in every exponent, p in
    /// {1, inf} included (phi itself is exact there).
    pub fn support_value(&self, v: &[f64]) -> Result<f64, ProfileError> {
        let m = self.operator.score_dim();
        if v.len() != m {
            return Err(ProfileError::DimensionMismatch { got: v.len(), expected: m });
        }
        let c_inv = self.c_inv.as_ref().ok_or(ProfileError::SingularCurvature)?;
        let w = linalg::mat_vec(c_inv, m, m, v);
        Ok(2.0 * (self.eta * self.operator.phi(&w)).sqrt())
    }

    /// The boundary point attaining the support value in direction v;
    /// closed form for p = 2 (u* = sqrt(eta) W v / sqrt(v . W v) with
    /// W = C^-1 M C^-1), absent otherwise.
    pub fn touch_point(&self, v: &[f64]) -> Option<Vec<f64>> {
        if self.operator.norm().p() != 2.0 {
            return None;
        }
        let m = self.operator.score_dim();
        let c_inv = self.c_inv.as_ref()?;
        let mv = linalg::mat_vec(c_inv, m, m, v);
        let wv = {
            let t = linalg::mat_vec(self.operator.second_moment(), m, m, &mv);
            linalg::mat_vec(c_inv, m, m, &t)
        };
        let denom = linalg::dot(v, &wv);
        if !(denom > 0.0) {
            return None;
        }
        let coef = self.eta.sqrt() / denom.sqrt();
        Some(wv.iter().map(|x| coef * x).collect())
    }
}
