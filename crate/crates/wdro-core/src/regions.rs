//! User-facing confidence regions.
//!
//! Two families share one Region type: the robust region, whose body is
//! a conjugate level set calibrated by Monte Carlo, and the classical
//! normal-theory ellipse. Both are stored as a center (the empirical
//! risk minimizer), a 1/sqrt(n) scale, and a body living in the scaled
//! deviation space; membership, support values, and 2-D polygon export
//! are uniform across the two.

use crate::calibration::{
    calibrate_eta, estimate_c, estimate_xi, factorize_cov, solve_mahalanobis_a, CalibrationError,
};
use crate::estimators::{fit_erm, EstimatorError};
use crate::linalg;
use crate::model::{Dataset, LinearRegressionLoss, LossModel, ModelError};
use crate::norms::{NormError, NormSpec};
use crate::profile::{LevelSet, ProfileError, ProfileOperator, ProfileOptions};
use crate::special::chi_square_quantile;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RegionError {
    #[error("need at least {need} observations to build a region in {dim} parameters, got {n}")]
    TooFewObservations { n: usize, need: usize, dim: usize },
    #[error("asymptotic coverage is only guaranteed for exponents strictly between 1 and infinity, got p = {0}; the plotting builder accepts boundary exponents and marks the result accordingly")]
    ExponentOutsideGuarantee(f64),
    #[error("exponent must satisfy p >= 1, got {0}")]
    ExponentOutOfRange(f64),
    #[error("all residuals vanish; the normal-theory ellipse is degenerate")]
    ZeroResidualVariance,
    #[error("design second moment is singular; collect more observations or drop collinear predictors")]
    SingularDesign,
    #[error("polygon export needs a two-dimensional parameter, got dimension {0}")]
    PolygonDimension(usize),
    #[error("a polygon needs at least 3 directions, got {0}")]
    TooFewDirections(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    Wdro,
    Clt,
}

/// Descriptive fields carried by every region.
#[derive(Debug, Clone)]
pub struct RegionMeta {
    pub alpha: f64,
    /// The body threshold: the calibrated quantile for robust regions,
    /// the chi-square quantile for the ellipse.
    pub threshold: f64,
    /// Transport-cost dual exponent; absent for the ellipse.
    pub p: Option<f64>,
    pub n: usize,
    /// Implied ambiguity radius threshold / n; robust regions only.
    pub delta_n: Option<f64>,
    /// False when the exponent sits on the boundary of the interval the
    /// asymptotic theory covers (p in {1, inf}): such regions are for
    /// plotting, not coverage statements.
    pub guarantee: bool,
    /// Monte Carlo standard error of the calibrated threshold.
    pub quantile_se: Option<f64>,
    /// True when the transport cost was the calibrated Mahalanobis
    /// quadratic rather than a power of a p-norm.
    pub mahalanobis_cost: bool,
}

#[derive(Debug)]
enum RegionBody {
    Profile(LevelSet),
    Ellipsoid {
        q: Vec<f64>,
        q_inv: Vec<f64>,
        radius2: f64,
    },
}

/// A confidence region: center + scale + body. Immutable; queries are
/// concurrency-safe.
#[derive(Debug)]
pub struct Region {
    pub kind: RegionKind,
    pub center: Vec<f64>,
    pub scale: f64,
    body: RegionBody,
    pub meta: RegionMeta,
}

impl Region {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Membership: (point - center) / scale lies in the body. An
    /// unbounded conjugate evaluation counts as non-membership.
    pub fn contains(&self, point: &[f64]) -> bool {
        debug_assert_eq!(point.len(), self.dim());
        let z: Vec<f64> = point
            .iter()
            .zip(&self.center)
            .map(|(x, c)| (x - c) / self.scale)
            .collect();
        match &self.body {
            RegionBody::Profile(ls) => ls.membership(&z).is_member(),
            RegionBody::Ellipsoid { q, radius2, .. } => {
                let qz = linalg::mat_vec(q, z.len(), z.len(), &z);
                linalg::dot(&z, &qz) <= *radius2
            }
        }
    }

    /// Support value of the centered region in original coordinates:
    /// sup { v . (x - center) : x in region } = scale * h_body(v).
    pub fn support_value(&self, v: &[f64]) -> Result<f64, RegionError> {
        let h = match &self.body {
            RegionBody::Profile(ls) => ls.support_value(v)?,
            RegionBody::Ellipsoid { q_inv, radius2, .. } => {
                let qv = linalg::mat_vec(q_inv, v.len(), v.len(), v);
                (radius2 * linalg::dot(v, &qv)).sqrt()
            }
        };
        Ok(self.scale * h)
    }

    /// Boundary point attaining the support value, in original
    /// coordinates, when a closed form exists (p = 2 bodies and the
    /// ellipse).
    pub fn touch_point(&self, v: &[f64]) -> Option<Vec<f64>> {
        let u = match &self.body {
            RegionBody::Profile(ls) => ls.touch_point(v)?,
            RegionBody::Ellipsoid { q_inv, radius2, .. } => {
                let qv = linalg::mat_vec(q_inv, v.len(), v.len(), v);
                let denom = linalg::dot(v, &qv);
                if !(denom > 0.0) {
                    return None;
                }
                let coef = radius2.sqrt() / denom.sqrt();
                qv.iter().map(|x| coef * x).collect()
            }
        };
        Some(
            u.iter()
                .zip(&self.center)
                .map(|(ui, c)| c + self.scale * ui)
                .collect(),
        )
    }

    /// Halfspace envelope over `num_directions` counterclockwise
    /// directions; two-dimensional regions only.
    pub fn polygon(&self, num_directions: usize) -> Result<Vec<PolygonEdge>, RegionError> {
        if self.dim() != 2 {
            return Err(RegionError::PolygonDimension(self.dim()));
        }
        if num_directions < 3 {
            return Err(RegionError::TooFewDirections(num_directions));
        }
        let mut edges = Vec::with_capacity(num_directions);
        for k in 0..num_directions {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / num_directions as f64;
            let v = [theta.cos(), theta.sin()];
            let support = self.support_value(&v)?;
            let touch = self.touch_point(&v).map(|t| [t[0], t[1]]);
            edges.push(PolygonEdge {
                direction: v,
                support,
                touch,
            });
        }
        Ok(edges)
    }
}

/// One halfspace of a polygon envelope: the region lies inside
/// { x : direction . (x - center) <= support }. `touch` is the boundary
/// point attaining equality when a closed form exists.
#[derive(Debug, Clone)]
pub struct PolygonEdge {
    pub direction: [f64; 2],
    pub support: f64,
    pub touch: Option<[f64; 2]>,
}

fn check_sample_size(n: usize, dim: usize) -> Result<(), RegionError> {
    let need = dim + 1;
    if n < need {
        return Err(RegionError::TooFewObservations { n, need, dim });
    }
    Ok(())
}

fn build_wdro_inner<L: LossModel>(
    model: &L,
    data: &Dataset,
    p: f64,
    alpha: f64,
    mc_draws: usize,
    seed: u64,
    operator_override: Option<ProfileOperator>,
) -> Result<Region, RegionError> {
    let dim = model.param_dim();
    check_sample_size(data.n(), dim)?;
    let norm = NormSpec::from_p(p)?;
    let erm = fit_erm(model, data, 1e-9)?;
    let beta_hat = erm.beta_hat;
    let c_n = estimate_c(model, data, &beta_hat);
    let xi = match model.score_covariance_estimate(data, &beta_hat) {
        Some(xi) => xi,
        None => estimate_xi(model, data, &beta_hat)?,
    };
    let xi_bar = factorize_cov(&xi, model.score_dim())?;
    let operator = match operator_override {
        Some(op) => op,
        None => ProfileOperator::new(model, data, &beta_hat, norm, ProfileOptions::default())?,
    };
    let cal = calibrate_eta(&operator, &xi_bar, alpha, mc_draws, seed)?;
    let n = data.n();
    let guarantee = p > 1.0 && p.is_finite();
    let meta = RegionMeta {
        alpha,
        threshold: cal.eta_alpha,
        p: Some(p),
        n,
        delta_n: Some(cal.eta_alpha / n as f64),
        guarantee,
        quantile_se: Some(cal.quantile_se),
        mahalanobis_cost: false,
    };
    Ok(Region {
        kind: RegionKind::Wdro,
        center: beta_hat,
        scale: 1.0 / (n as f64).sqrt(),
        body: RegionBody::Profile(LevelSet::new(operator, c_n, cal.eta_alpha)),
        meta,
    })
}

/// Builds the calibrated robust region: fit the empirical minimizer,
/// estimate the curvature and score-covariance plug-ins, calibrate the
/// threshold by Monte Carlo, and wrap the conjugate level set. Only
/// exponents strictly inside (1, inf) carry the coverage guarantee;
/// boundary exponents are refused here.
pub fn build_wdro_region<L: LossModel>(
    model: &L,
    data: &Dataset,
    p: f64,
    alpha: f64,
    mc_draws: usize,
    seed: u64,
) -> Result<Region, RegionError> {
    if !(p > 1.0) || p.is_infinite() {
        return Err(RegionError::ExponentOutsideGuarantee(p));
    }
    build_wdro_inner(model, data, p, alpha, mc_draws, seed, None)
}

/// Same pipeline with boundary exponents admitted for shape plots.
/// Membership and calibration then run on a smoothed conjugate and the
/// region is marked `guarantee: false`; support values stay exact.
pub fn build_wdro_region_for_plots<L: LossModel>(
    model: &L,
    data: &Dataset,
    p: f64,
    alpha: f64,
    mc_draws: usize,
    seed: u64,
) -> Result<Region, RegionError> {
    if !(p >= 1.0) {
        return Err(RegionError::ExponentOutOfRange(p));
    }
    build_wdro_inner(model, data, p, alpha, mc_draws, seed, None)
}

/// The classical least-squares ellipse: body
/// { z : z' (C_n / sigma2) z <= chi-square quantile }, center at the
/// least-squares fit, scale 1/sqrt(n).
pub fn build_clt_region(data: &Dataset, alpha: f64) -> Result<Region, RegionError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(RegionError::Calibration(CalibrationError::AlphaOutOfRange(
            alpha,
        )));
    }
    let d = data
        .data_dim()
        .checked_sub(1)
        .filter(|d| *d >= 1)
        .ok_or(ModelError::NoPredictors)?;
    let model = LinearRegressionLoss::new(d)?;
    check_sample_size(data.n(), d)?;
    let erm = fit_erm(&model, data, 1e-9)?;
    let beta_hat = erm.beta_hat;
    let n = data.n();
    let resid_sq: Vec<f64> = (0..n)
        .map(|i| {
            let e = model.residual(data.row(i), &beta_hat);
            e * e
        })
        .collect();
    let sigma2 = linalg::pairwise_sum(&resid_sq) / n as f64;
    if !(sigma2 > 0.0) {
        return Err(RegionError::ZeroResidualVariance);
    }
    let c_n = estimate_c(&model, data, &beta_hat);
    let c_inv = linalg::invert(&c_n, d).ok_or(RegionError::SingularDesign)?;
    let q: Vec<f64> = c_n.iter().map(|v| v / sigma2).collect();
    let q_inv: Vec<f64> = c_inv.iter().map(|v| v * sigma2).collect();
    let radius2 = chi_square_quantile(1.0 - alpha, d);
    let meta = RegionMeta {
        alpha,
        threshold: radius2,
        p: None,
        n,
        delta_n: None,
        guarantee: true,
        quantile_se: None,
        mahalanobis_cost: false,
    };
    Ok(Region {
        kind: RegionKind::Clt,
        center: beta_hat,
        scale: 1.0 / (n as f64).sqrt(),
        body: RegionBody::Ellipsoid { q, q_inv, radius2 },
        meta,
    })
}

/// Robust region under the calibrated Mahalanobis transport cost. The
/// cost matrix solves the moment equation that aligns the robust region
/// with the classical ellipse; the induced quadratic form replaces the
/// p-norm profile, so the body stays a p = 2-style level set.
pub fn build_mahalanobis_region(
    data: &Dataset,
    alpha: f64,
    mc_draws: usize,
    seed: u64,
) -> Result<Region, RegionError> {
    let d = data
        .data_dim()
        .checked_sub(1)
        .filter(|d| *d >= 1)
        .ok_or(ModelError::NoPredictors)?;
    let model = LinearRegressionLoss::new(d)?;
    check_sample_size(data.n(), d)?;
    let erm = fit_erm(&model, data, 1e-9)?;
    let n = data.n();
    let resid_sq: Vec<f64> = (0..n)
        .map(|i| {
            let e = model.residual(data.row(i), &erm.beta_hat);
            e * e
        })
        .collect();
    let sigma2 = linalg::pairwise_sum(&resid_sq) / n as f64;
    let cal = solve_mahalanobis_a(&model, data, &erm.beta_hat, sigma2)?;
    // phi under the Mahalanobis cost is the quadratic xi' M_A xi / 4;
    // a single jacobian block equal to the symmetric square root of
    // M_A reproduces it through the standard p = 2 machinery.
    let g = linalg::spectral_map(&cal.m_a, d, |v| v.max(0.0).sqrt());
    let operator = ProfileOperator::from_jacobians(
        g,
        1,
        d,
        d,
        NormSpec::from_p(2.0)?,
        ProfileOptions::default(),
    );
    let mut region = build_wdro_inner(&model, data, 2.0, alpha, mc_draws, seed, Some(operator))?;
    region.meta.mahalanobis_cost = true;
    Ok(region)
}
