//! Command implementations.
//!
//! Each command is a pure-ish function from (parsed config, seed flag,
//! output directory) to a typed outcome; the binary is a thin shell
//! around these so integration tests can drive them in process.

pub mod coverage;
pub mod fit;
pub mod limit;
pub mod region;
pub mod scatter;

use crate::config::{Config, ConfigError};
use crate::csvio::{read_numeric_csv, CsvError};
use std::path::Path;
use thiserror::Error;
use wdro_core::calibration::{calibrate_eta, estimate_xi, CalibrationError, CalibrationResult};
use wdro_core::estimators::EstimatorError;
use wdro_core::limit_sim::LimitError;
use wdro_core::model::{generate_regression_data, Dataset, GaussianRegressionSpec, ModelError};
use wdro_core::norms::{NormError, NormSpec};
use wdro_core::profile::{ProfileError, ProfileOperator, ProfileOptions};
use wdro_core::regions::{Region, RegionError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error("{0}")]
    Io(String),
    #[error("cell {cell}: {failures} of {replications} replications failed, above the 1% abort threshold")]
    TooManyFailures {
        cell: String,
        failures: usize,
        replications: usize,
    },
    #[error("polygon export needs a two-dimensional parameter, got d = {0}")]
    NotPlanar(usize),
    #[error("{0}")]
    Invalid(String),
}

impl From<String> for CliError {
    fn from(msg: String) -> Self {
        CliError::Io(msg)
    }
}

/// Seed precedence: `--seed` flag, then the command section's `seed`
/// key, then the `WDRO_SEED` environment variable, then 0. The config
/// key is always marked as read so strict parsing never flags a seed
/// the flag overrode.
pub fn resolve_seed(flag: Option<u64>, cfg: &Config, key: &str) -> Result<u64, CliError> {
    let from_config = cfg.u64_opt(key)?;
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = from_config {
        return Ok(s);
    }
    match std::env::var("WDRO_SEED") {
        Ok(v) => v.parse().map_err(|_| {
            CliError::Invalid(format!("WDRO_SEED must be an unsigned integer, got `{v}`"))
        }),
        Err(_) => Ok(0),
    }
}

/// The `[model]` section as a data-generating spec. `require_n` is off
/// for commands that supply sample sizes themselves.
pub fn model_spec_from(cfg: &Config, require_n: bool) -> Result<GaussianRegressionSpec, CliError> {
    let beta_star = cfg.require_f64_list("model.beta_star")?;
    let rho = cfg.require_f64("model.rho")?;
    let sigma2 = cfg.f64_or("model.sigma2", 1.0)?;
    let n = if require_n {
        cfg.require_usize("model.n")?
    } else {
        cfg.usize_or("model.n", 0)?
    };
    Ok(GaussianRegressionSpec {
        n,
        beta_star,
        rho,
        sigma2,
    })
}

pub struct LoadedData {
    pub data: Dataset,
    pub dim: usize,
    pub source: String,
}

/// Either a CSV named under `[data] csv = path` (columns x_1..x_d, y)
/// or a synthetic draw from the `[model]` section at the given seed.
pub fn load_dataset(cfg: &Config, seed: u64) -> Result<LoadedData, CliError> {
    if let Some(path) = cfg.str_opt("data.csv") {
        let table = read_numeric_csv(Path::new(&path))?;
        if table.cols < 2 {
            return Err(CliError::Invalid(format!(
                "{path}: need at least two columns (predictors then response), got {}",
                table.cols
            )));
        }
        let data = Dataset::new(table.values, table.rows, table.cols)?;
        Ok(LoadedData {
            dim: table.cols - 1,
            data,
            source: path,
        })
    } else {
        let spec = model_spec_from(cfg, true)?;
        let data = generate_regression_data(&spec, seed)?;
        Ok(LoadedData {
            dim: spec.dim(),
            data,
            source: "synthetic".to_string(),
        })
    }
}

/// One calibration pass at a fitted parameter: score covariance, its
/// square root, the profile operator, and the quantile. Returns the
/// radius delta = eta / n alongside the quantile result.
pub fn calibrate_radius<L: wdro_core::model::LossModel>(
    model: &L,
    data: &Dataset,
    beta_hat: &[f64],
    norm: NormSpec,
    alpha: f64,
    mc_draws: usize,
    seed: u64,
) -> Result<(f64, CalibrationResult), CliError> {
    let xi = match model.score_covariance_estimate(data, beta_hat) {
        Some(xi) => xi,
        None => estimate_xi(model, data, beta_hat)?,
    };
    let xi_bar = wdro_core::calibration::factorize_cov(&xi, model.score_dim())?;
    let op = ProfileOperator::new(model, data, beta_hat, norm, ProfileOptions::default())?;
    let cal = calibrate_eta(&op, &xi_bar, alpha, mc_draws, seed)?;
    let delta = cal.eta_alpha / data.n() as f64;
    Ok((delta, cal))
}

/// Polygon CSV: one row per direction with the halfspace data and the
/// vertex where consecutive boundary lines cross. Directions are
/// counterclockwise, so the vertices trace the boundary in order.
pub fn polygon_csv(region: &Region, directions: usize) -> Result<String, CliError> {
    use crate::csvio::fmt_f64;
    let edges = region.polygon(directions)?;
    let mut out = String::from("dir_x,dir_y,support_value,touch_x,touch_y,vertex_x,vertex_y\n");
    for k in 0..edges.len() {
        let e = &edges[k];
        let f = &edges[(k + 1) % edges.len()];
        let det = e.direction[0] * f.direction[1] - e.direction[1] * f.direction[0];
        let vertex = if det.abs() > 1e-12 {
            // Solve v_k . z = h_k, v_{k+1} . z = h_{k+1} in centered
            // coordinates, then shift back.
            let zx = (e.support * f.direction[1] - f.support * e.direction[1]) / det;
            let zy = (e.direction[0] * f.support - f.direction[0] * e.support) / det;
            Some((region.center[0] + zx, region.center[1] + zy))
        } else {
            None
        };
        let touch = e
            .touch
            .map(|t| (fmt_f64(t[0]), fmt_f64(t[1])))
            .unwrap_or_default();
        let vert = vertex
            .map(|(x, y)| (fmt_f64(x), fmt_f64(y)))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_f64(e.direction[0]),
            fmt_f64(e.direction[1]),
            fmt_f64(e.support),
            touch.0,
            touch.1,
            vert.0,
            vert.1,
        ));
    }
    Ok(out)
}

pub fn fmt_vec(v: &[f64]) -> String {
    v.iter()
        .map(|x| crate::csvio::fmt_f64(*x))
        .collect::<Vec<_>>()
        .join(", ")
}
