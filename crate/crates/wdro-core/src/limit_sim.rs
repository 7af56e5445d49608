//! Monte-Carlo validation of the three-regime asymptotics of the
//! robust estimator.
//!
//! With ambiguity radius delta_n = eta * n^-gamma the robust estimator
//! behaves in one of three ways as n grows:
//!
//! * gamma > 1: robustification vanishes; the scaled deviation
//!   sqrt(n) (beta_dro - beta*) matches the classical CLT of the
//!   empirical minimizer.
//! * gamma = 1: same gaussian spread plus a deterministic shift
//!   -sqrt(eta) C^-1 grad S(beta*), where S is the sensitivity.
//! * gamma < 1: the bias dominates; n^(gamma/2) (beta_dro - beta*)
//!   concentrates at the shift with vanishing spread.
//!
//! The experiment runs seeded replications per sample size under the
//! Euclidean transport cost, reduces them deterministically, and pairs
//! every empirical moment with its predicted limit computed from
//! population quantities of the sampling model.

use crate::estimators::{fit_dro, fit_erm, sensitivity};
use crate::linalg;
use crate::model::{generate_regression_data, GaussianRegressionSpec, LinearRegressionLoss, ModelError};
use crate::norms::NormSpec;
use crate::rng::{derive_stream, mix};
use rayon::prelude::*;
use thiserror::Error;

/// Stream tag for the large plug-in sample behind the sensitivity
/// gradient estimate.
const STREAM_SENSITIVITY_PLUGIN: u64 = 0x14;

/// Sample size of the plug-in dataset used to estimate population
/// sensitivity derivatives by finite differences.
const PLUGIN_SAMPLES: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum LimitError {
    #[error("rate exponent gamma must be positive, got {0}")]
    BadGamma(f64),
    #[error("radius constant eta must be positive, got {0}")]
    BadEta(f64),
    #[error("sample-size grid is empty")]
    EmptyGrid,
    #[error("need at least 2 replications, got {0}")]
    TooFewReplications(usize),
    #[error("sensitivity gradient is undefined at the zero parameter")]
    ZeroTrueParameter,
    #[error("every replication failed at n = {n}")]
    AllReplicationsFailed { n: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One radius regime: delta_n = eta * n^-gamma across a sample-size
/// grid, replicated with a counter-seeded stream.
#[derive(Debug, Clone)]
pub struct RegimeSpec {
    pub gamma: f64,
    pub eta: f64,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
}

impl RegimeSpec {
    pub fn validate(&self) -> Result<(), LimitError> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(LimitError::BadGamma(self.gamma));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(LimitError::BadEta(self.eta));
        }
        if self.n_grid.is_empty() {
            return Err(LimitError::EmptyGrid);
        }
        if self.replications < 2 {
            return Err(LimitError::TooFewReplications(self.replications));
        }
        Ok(())
    }

    /// The scaling exponent of the robust deviation: min(gamma, 1).
    pub fn gamma_bar(&self) -> f64 {
        self.gamma.min(1.0)
    }

    pub fn delta_n(&self, n: usize) -> f64 {
        self.eta * (n as f64).powf(-self.gamma)
    }
}

/// Population quantities the predictions are built from.
#[derive(Debug, Clone)]
pub struct PopulationLimits {
    /// C = E[X X'], the score-jacobian mean at beta*.
    pub c: Vec<f64>,
    /// cov h(U, beta*) = sigma^2 C for the regression score.
    pub score_cov: Vec<f64>,
    /// grad S(beta*), estimated by central differences of the
    /// sensitivity on a large plug-in sample.
    pub sensitivity_grad: Vec<f64>,
    /// Predicted mean of the scaled robust deviation:
    /// -sqrt(eta) 1{gamma <= 1} C^-1 grad S(beta*).
    pub dro_bias: Vec<f64>,
    /// Predicted covariance of the scaled robust deviation:
    /// 1{gamma >= 1} C^-1 (cov h) C^-1.
    pub dro_cov: Vec<f64>,
    /// Predicted covariance of the scaled empirical-minimizer
    /// deviation: C^-1 (cov h) C^-1, every regime.
    pub erm_cov: Vec<f64>,
}

/// One summarized scalar component of a cell.
#[derive(Debug, Clone)]
pub struct ComponentSummary {
    pub component: String,
    pub empirical_mean: f64,
    pub predicted_mean: f64,
    pub empirical_sd: f64,
    pub predicted_sd: f64,
    /// Standard error of the empirical mean: sd / sqrt(successes).
    pub mc_se: f64,
}

/// All summaries for one sample size.
#[derive(Debug, Clone)]
pub struct LimitCell {
    pub n: usize,
    pub successes: usize,
    pub failures: usize,
    /// 3 d components: dro_dev_k, erm_dev_k, dro_minus_erm_k.
    pub components: Vec<ComponentSummary>,
    /// Empirical covariance of sqrt(n) (beta_erm - beta*), d x d.
    pub erm_scaled_cov: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LimitExperiment {
    pub gamma: f64,
    pub eta: f64,
    pub gamma_bar: f64,
    pub population: PopulationLimits,
    pub cells: Vec<LimitCell>,
}

struct RepVectors {
    dro_dev: Vec<f64>,
    erm_dev: Vec<f64>,
    diff: Vec<f64>,
}

/// Population limits for the regression model under the Euclidean
/// cost. C and cov h are analytic; the sensitivity gradient comes from
/// finite differences on a deterministic plug-in sample, which keeps
/// the oracle honest for models where no closed form is known.
pub fn population_limits(
    spec: &RegimeSpec,
    model: &GaussianRegressionSpec,
) -> Result<PopulationLimits, LimitError> {
    // The template's own n is ignored; the grid supplies sample sizes.
    GaussianRegressionSpec { n: 1, ..model.clone() }.validate()?;
    let d = model.beta_star.len();
    if linalg::norm2(&model.beta_star) == 0.0 {
        return Err(LimitError::ZeroTrueParameter);
    }
    let c = model.covariance();
    let score_cov: Vec<f64> = c.iter().map(|v| model.sigma2 * v).collect();

    let plugin_spec = GaussianRegressionSpec {
        n: PLUGIN_SAMPLES,
        ..model.clone()
    };
    let plugin = generate_regression_data(&plugin_spec, derive_stream(spec.seed, STREAM_SENSITIVITY_PLUGIN))?;
    let loss = LinearRegressionLoss::new(d)?;
    let norm = NormSpec::from_p(2.0).expect("euclidean exponent");
    let mut grad = vec![0.0; d];
    for k in 0..d {
        let h = 1e-4 * (1.0 + model.beta_star[k].abs());
        let mut plus = model.beta_star.clone();
        plus[k] += h;
        let mut minus = model.beta_star.clone();
        minus[k] -= h;
        let s_plus = sensitivity(&loss, &plugin, &plus, &norm);
        let s_minus = sensitivity(&loss, &plugin, &minus, &norm);
        grad[k] = (s_plus - s_minus) / (2.0 * h);
    }

    let shift = if spec.gamma <= 1.0 {
        let solved = linalg::lu_solve(&c, d, &grad).expect("model covariance is positive definite");
        solved.iter().map(|v| -spec.eta.sqrt() * v).collect()
    } else {
        vec![0.0; d]
    };
    let c_inv = linalg::invert(&c, d).expect("model covariance is positive definite");
    let sandwich = {
        let t = linalg::mat_mul(&c_inv, d, d, &score_cov, d);
        linalg::mat_mul(&t, d, d, &c_inv, d)
    };
    let dro_cov = if spec.gamma >= 1.0 {
        sandwich.clone()
    } else {
        vec![0.0; d * d]
    };
    Ok(PopulationLimits {
        c,
        score_cov,
        sensitivity_grad: grad,
        dro_bias: shift,
        dro_cov,
        erm_cov: sandwich,
    })
}

fn summarize_component(
    name: String,
    values: &[f64],
    predicted_mean: f64,
    predicted_sd: f64,
) -> ComponentSummary {
    let r = values.len() as f64;
    let empirical_mean = linalg::pairwise_sum(values) / r;
    let sq: Vec<f64> = values
        .iter()
        .map(|v| (v - empirical_mean) * (v - empirical_mean))
        .collect();
    let empirical_sd = (linalg::pairwise_sum(&sq) / (r - 1.0)).sqrt();
    ComponentSummary {
        component: name,
        empirical_mean,
        predicted_mean,
        empirical_sd,
        predicted_sd,
        mc_se: empirical_sd / r.sqrt(),
    }
}

/// Runs the regime experiment: for each n, `replications` seeded
/// datasets, an empirical fit and a robust fit at delta_n on each, and
/// moment summaries of the scaled deviations against their predicted
/// limits. Replications run in parallel; the reduction is a fixed-order
/// pairwise sum, so results do not depend on thread count.
pub fn run_limit_experiment(
    spec: &RegimeSpec,
    model: &GaussianRegressionSpec,
) -> Result<LimitExperiment, LimitError> {
    spec.validate()?;
    let d = model.beta_star.len();
    let population = population_limits(spec, model)?;
    let norm = NormSpec::from_p(2.0).expect("euclidean exponent");
    let gamma_bar = spec.gamma_bar();
    let diff_sd_zero = 0.0;

    let mut cells = Vec::with_capacity(spec.n_grid.len());
    for (n_index, &n) in spec.n_grid.iter().enumerate() {
        let delta = spec.delta_n(n);
        let dro_scale = (n as f64).powf(0.5 * gamma_bar);
        let erm_scale = (n as f64).sqrt();
        let cell_key = mix(spec.seed, n_index as u64);
        let outcomes: Vec<Option<RepVectors>> = (0..spec.replications)
            .into_par_iter()
            .map(|rep| {
                let rep_seed = mix(cell_key, rep as u64);
                let data_spec = GaussianRegressionSpec { n, ..model.clone() };
                let data = generate_regression_data(&data_spec, rep_seed).ok()?;
                let loss = LinearRegressionLoss::new(d).ok()?;
                let erm = fit_erm(&loss, &data, 1e-10).ok()?;
                let dro = fit_dro(&loss, &data, delta, &norm, 1e-10).ok()?;
                if !erm.converged || !dro.converged {
                    return None;
                }
                let mut dro_dev = vec![0.0; d];
                let mut erm_dev = vec![0.0; d];
                let mut diff = vec![0.0; d];
                for k in 0..d {
                    dro_dev[k] = dro_scale * (dro.beta_hat[k] - model.beta_star[k]);
                    erm_dev[k] = erm_scale * (erm.beta_hat[k] - model.beta_star[k]);
                    diff[k] = dro_scale * (dro.beta_hat[k] - erm.beta_hat[k]);
                }
                Some(RepVectors { dro_dev, erm_dev, diff })
            })
            .collect();
        let successes: Vec<&RepVectors> = outcomes.iter().flatten().collect();
        if successes.is_empty() {
            return Err(LimitError::AllReplicationsFailed { n });
        }
        let failures = spec.replications - successes.len();

        let mut components = Vec::with_capacity(3 * d);
        for k in 0..d {
            let vals: Vec<f64> = successes.iter().map(|r| r.dro_dev[k]).collect();
            components.push(summarize_component(
                format!("dro_dev_{}", k + 1),
                &vals,
                population.dro_bias[k],
                population.dro_cov[k * d + k].sqrt(),
            ));
        }
        for k in 0..d {
            let vals: Vec<f64> = successes.iter().map(|r| r.erm_dev[k]).collect();
            components.push(summarize_component(
                format!("erm_dev_{}", k + 1),
                &vals,
                0.0,
                population.erm_cov[k * d + k].sqrt(),
            ));
        }
        for k in 0..d {
            let vals: Vec<f64> = successes.iter().map(|r| r.diff[k]).collect();
            components.push(summarize_component(
                format!("dro_minus_erm_{}", k + 1),
                &vals,
                population.dro_bias[k],
                diff_sd_zero,
            ));
        }

        // Empirical covariance of the scaled empirical-minimizer
        // deviation, for the CLT sanity cross-check.
        let erm_means: Vec<f64> = (0..d)
            .map(|k| {
                let vals: Vec<f64> = successes.iter().map(|r| r.erm_dev[k]).collect();
                linalg::pairwise_sum(&vals) / successes.len() as f64
            })
            .collect();
        let mut erm_scaled_cov = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                let prods: Vec<f64> = successes
                    .iter()
                    .map(|r| (r.erm_dev[a] - erm_means[a]) * (r.erm_dev[b] - erm_means[b]))
                    .collect();
                erm_scaled_cov[a * d + b] =
                    linalg::pairwise_sum(&prods) / (successes.len() as f64 - 1.0);
            }
        }

        cells.push(LimitCell {
            n,
            successes: successes.len(),
            failures,
            components,
            erm_scaled_cov,
        });
    }
    Ok(LimitExperiment {
        gamma: spec.gamma,
        eta: spec.eta,
        gamma_bar,
        population,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_model() -> GaussianRegressionSpec {
        GaussianRegressionSpec {
            n: 0,
            beta_star: vec![0.5, 0.5],
            rho: 0.0,
            sigma2: 1.0,
        }
    }

    #[test]
    fn spec_validation_catches_bad_inputs() {
        let good = RegimeSpec {
            gamma: 1.0,
            eta: 1.0,
            n_grid: vec![100],
            replications: 10,
            seed: 1,
        };
        assert!(good.validate().is_ok());
        assert_eq!(
            RegimeSpec { gamma: 0.0, ..good.clone() }.validate().unwrap_err(),
            LimitError::BadGamma(0.0)
        );
        assert_eq!(
            RegimeSpec { eta: -1.0, ..good.clone() }.validate().unwrap_err(),
            LimitError::BadEta(-1.0)
        );
        assert_eq!(
            RegimeSpec { n_grid: vec![], ..good.clone() }.validate().unwrap_err(),
            LimitError::EmptyGrid
        );
        assert_eq!(
            RegimeSpec { replications: 1, ..good }.validate().unwrap_err(),
            LimitError::TooFewReplications(1)
        );
    }

    #[test]
    fn sensitivity_gradient_matches_the_closed_form() {
        // For the regression loss, S(beta) = ||beta||_2 sqrt(mean squared
        // residual), so grad S(beta*) = sigma * beta* / ||beta*||_2 at the
        // truth. The finite-difference plug-in must land on it.
        let spec = RegimeSpec {
            gamma: 1.0,
            eta: 1.0,
            n_grid: vec![100],
            replications: 10,
            seed: 7,
        };
        let model = GaussianRegressionSpec {
            n: 0,
            beta_star: vec![0.5, 0.1],
            rho: 0.4,
            sigma2: 1.0,
        };
        let pop = population_limits(&spec, &model).unwrap();
        let nb = linalg::norm2(&model.beta_star);
        let analytic: Vec<f64> = model
            .beta_star
            .iter()
            .map(|b| model.sigma2.sqrt() * b / nb)
            .collect();
        for k in 0..2 {
            assert!(
                (pop.sensitivity_grad[k] - analytic[k]).abs() < 5e-3,
                "coordinate {k}: plug-in {} vs analytic {}",
                pop.sensitivity_grad[k],
                analytic[k]
            );
        }
        // gamma = 1 keeps both the bias and the gaussian spread.
        assert!(linalg::norm2(&pop.dro_bias) > 0.1);
        assert_eq!(pop.dro_cov, pop.erm_cov);
    }

    #[test]
    fn fast_rates_make_robustness_invisible() {
        let spec = RegimeSpec {
            gamma: 2.0,
            eta: 1.0,
            n_grid: vec![800],
            replications: 300,
            seed: 11,
        };
        let run = run_limit_experiment(&spec, &base_model()).unwrap();
        let cell = &run.cells[0];
        assert_eq!(cell.failures, 0);
        // Predicted bias is zero in this regime.
        assert_eq!(linalg::norm2(&run.population.dro_bias), 0.0);
        // The finite-n separation still carries an O(n^-1/2) remainder;
        // what vanishes is its size next to the critical-rate shift
        // -sqrt(eta) C^-1 grad S, whose coordinates are about 0.7 here.
        let n = cell.n as f64;
        let remainder_scale =
            2.0 * (spec.eta / n).sqrt() * linalg::norm2(&run.population.sensitivity_grad);
        for comp in &cell.components {
            if comp.component.starts_with("dro_minus_erm") {
                assert!(
                    comp.empirical_mean.abs() < remainder_scale.max(4.0 * comp.mc_se),
                    "{}: residual separation {} exceeds remainder scale {}",
                    comp.component,
                    comp.empirical_mean,
                    remainder_scale
                );
                assert!(
                    comp.empirical_mean.abs() < 0.1 * spec.eta.sqrt(),
                    "{}: separation {} is not an order below the critical shift",
                    comp.component,
                    comp.empirical_mean
                );
                assert!(
                    comp.empirical_sd < 0.1,
                    "{}: separation should be degenerate, sd {}",
                    comp.component,
                    comp.empirical_sd
                );
            }
        }
    }

    #[test]
    fn slow_rates_concentrate_at_the_deterministic_shift() {
        let spec = RegimeSpec {
            gamma: 0.5,
            eta: 1.0,
            n_grid: vec![250, 1000, 4000],
            replications: 400,
            seed: 13,
        };
        let model = base_model();
        let run = run_limit_experiment(&spec, &model).unwrap();
        assert_eq!(run.gamma_bar, 0.5);
        let d = 2;
        // Spread of the scaled robust deviation shrinks along the grid.
        for k in 0..d {
            let sds: Vec<f64> = run
                .cells
                .iter()
                .map(|c| c.components[k].empirical_sd)
                .collect();
            assert!(
                sds.last().unwrap() < &(0.6 * sds[0]),
                "coordinate {k}: spread not vanishing: {sds:?}"
            );
            // Mean near the deterministic shift at the largest n.
            let comp = &run.cells[2].components[k];
            assert!(
                (comp.empirical_mean - comp.predicted_mean).abs()
                    < (4.0 * comp.mc_se).max(0.02),
                "coordinate {k}: mean {} vs shift {}",
                comp.empirical_mean,
                comp.predicted_mean
            );
        }
        // Unscaled bias follows the n^(-gamma/2) power law.
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for cell in &run.cells {
            let bias: Vec<f64> = (0..d)
                .map(|k| {
                    cell.components[k].empirical_mean / (cell.n as f64).powf(0.5 * run.gamma_bar)
                })
                .collect();
            xs.push((cell.n as f64).ln());
            ys.push(linalg::norm2(&bias).ln());
        }
        let xbar = xs.iter().sum::<f64>() / xs.len() as f64;
        let ybar = ys.iter().sum::<f64>() / ys.len() as f64;
        let slope = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xbar) * (y - ybar))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xbar) * (x - xbar)).sum::<f64>();
        let theory = -0.5 * spec.gamma;
        assert!(
            (slope - theory).abs() < 0.1,
            "log-log bias slope {slope} vs theory {theory}"
        );
    }

    #[test]
    fn critical_rate_shifts_the_mean_by_the_sensitivity_term() {
        let spec = RegimeSpec {
            gamma: 1.0,
            eta: 1.0,
            n_grid: vec![1000],
            replications: 500,
            seed: 17,
        };
        let run = run_limit_experiment(&spec, &base_model()).unwrap();
        let cell = &run.cells[0];
        let d = 2;
        for k in 0..d {
            let comp = &cell.components[2 * d + k];
            assert!(comp.component.starts_with("dro_minus_erm"));
            assert!(
                (comp.empirical_mean - comp.predicted_mean).abs() < 4.0 * comp.mc_se.max(0.004),
                "{}: separation {} vs predicted {} (se {})",
                comp.component,
                comp.empirical_mean,
                comp.predicted_mean,
                comp.mc_se
            );
        }
        // ERM CLT sanity: empirical covariance of the scaled deviation
        // near the sandwich prediction.
        let fro = |m: &[f64]| linalg::norm2(m);
        let mut diff = cell.erm_scaled_cov.clone();
        for (a, b) in diff.iter_mut().zip(&run.population.erm_cov) {
            *a -= b;
        }
        assert!(
            fro(&diff) < 0.20 * fro(&run.population.erm_cov),
            "scaled ERM covariance {:?} vs predicted {:?}",
            cell.erm_scaled_cov,
            run.population.erm_cov
        );
    }

    #[test]
    fn reruns_are_bitwise_identical() {
        let spec = RegimeSpec {
            gamma: 1.0,
            eta: 0.5,
            n_grid: vec![120],
            replications: 50,
            seed: 23,
        };
        let a = run_limit_experiment(&spec, &base_model()).unwrap();
        let b = run_limit_experiment(&spec, &base_model()).unwrap();
        for (ca, cb) in a.cells.iter().zip(&b.cells) {
            assert_eq!(ca.successes, cb.successes);
            for (x, y) in ca.components.iter().zip(&cb.components) {
                assert_eq!(x.empirical_mean.to_bits(), y.empirical_mean.to_bits());
                assert_eq!(x.empirical_sd.to_bits(), y.empirical_sd.to_bits());
            }
        }
    }
}
