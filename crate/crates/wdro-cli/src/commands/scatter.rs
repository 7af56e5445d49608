//! `wdro scatter`: paired estimates across replications.
//!
//! Each replication draws a fresh dataset, fits the empirical
//! minimizer, calibrates the radius on that dataset, and fits the
//! robust estimator. The CSV holds one row per replication with both
//! estimates side by side; the report summarizes mean squared error
//! against the generating parameter for each estimator.

use super::{calibrate_radius, fmt_vec, model_spec_from, resolve_seed, CliError};
use crate::config::Config;
use crate::csvio::fmt_f64;
use crate::output::{report_envelope, RunDir};
use rayon::prelude::*;
use std::path::Path;
use wdro_core::estimators::{fit_dro, fit_erm};
use wdro_core::linalg;
use wdro_core::model::{generate_regression_data, GaussianRegressionSpec, LinearRegressionLoss};
use wdro_core::norms::NormSpec;
use wdro_core::rng::mix;

#[derive(Debug, Clone)]
pub struct ScatterParams {
    pub spec: GaussianRegressionSpec,
    pub p: f64,
    pub alpha: f64,
    pub mc_draws: usize,
    pub replications: usize,
    pub seed: u64,
}

struct RepPair {
    erm: Vec<f64>,
    dro: Vec<f64>,
}

#[derive(Debug)]
pub struct ScatterOutcome {
    pub params: ScatterParams,
    pub failures: usize,
    pub erm: Vec<Vec<f64>>,
    pub dro: Vec<Vec<f64>>,
    pub mse_erm: f64,
    pub mse_dro: f64,
    pub mse_erm_se: f64,
    pub mse_dro_se: f64,
    pub erm_mean: Vec<f64>,
    pub dro_mean: Vec<f64>,
    pub erm_mean_se: Vec<f64>,
    pub dro_mean_se: Vec<f64>,
}

fn run_one_rep(params: &ScatterParams, norm: &NormSpec, rep_seed: u64) -> Result<RepPair, CliError> {
    let data = generate_regression_data(&params.spec, rep_seed)?;
    let model = LinearRegressionLoss::new(params.spec.dim())?;
    let erm = fit_erm(&model, &data, 1e-9)?;
    let (delta, _) = calibrate_radius(
        &model,
        &data,
        &erm.beta_hat,
        *norm,
        params.alpha,
        params.mc_draws,
        rep_seed,
    )?;
    let dro = fit_dro(&model, &data, delta, norm, 1e-9)?;
    if !erm.converged || !dro.converged {
        return Err(CliError::Invalid("fit did not reach tolerance".to_string()));
    }
    Ok(RepPair {
        erm: erm.beta_hat,
        dro: dro.beta_hat,
    })
}

/// Column mean and its standard error, reduced in replication order.
fn mean_and_se(rows: &[Vec<f64>], k: usize) -> (f64, f64) {
    let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
    let n = col.len() as f64;
    let mean = linalg::pairwise_sum(&col) / n;
    if col.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = col.iter().map(|x| (x - mean) * (x - mean)).collect();
    let sd = (linalg::pairwise_sum(&sq) / (n - 1.0)).sqrt();
    (mean, sd / n.sqrt())
}

/// Mean of ‖estimate - beta_star‖² and its standard error.
fn mse_and_se(rows: &[Vec<f64>], beta_star: &[f64]) -> (f64, f64) {
    let sq: Vec<f64> = rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(beta_star)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .collect();
    let n = sq.len() as f64;
    let mean = linalg::pairwise_sum(&sq) / n;
    if sq.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = sq.iter().map(|x| (x - mean) * (x - mean)).collect();
    let sd = (linalg::pairwise_sum(&dev) / (n - 1.0)).sqrt();
    (mean, sd / n.sqrt())
}

pub fn run_engine(params: &ScatterParams) -> Result<ScatterOutcome, CliError> {
    if params.replications == 0 {
        return Err(CliError::Invalid(
            "scatter needs at least one replication".to_string(),
        ));
    }
    let norm = NormSpec::from_p(params.p)?;
    let outcomes: Vec<Result<RepPair, String>> = (0..params.replications)
        .into_par_iter()
        .map(|rep| run_one_rep(params, &norm, mix(params.seed, rep as u64)).map_err(|e| e.to_string()))
        .collect();

    let mut erm_rows = Vec::new();
    let mut dro_rows = Vec::new();
    let mut failures = 0usize;
    for (rep, outcome) in outcomes.iter().enumerate() {
        match outcome {
            Ok(pair) => {
                erm_rows.push(pair.erm.clone());
                dro_rows.push(pair.dro.clone());
            }
            Err(msg) => {
                failures += 1;
                eprintln!("scatter: replication {rep} failed: {msg}");
            }
        }
    }
    if failures * 100 > params.replications {
        return Err(CliError::TooManyFailures {
            cell: "scatter".to_string(),
            failures,
            replications: params.replications,
        });
    }

    let d = params.spec.dim();
    let (mse_erm, mse_erm_se) = mse_and_se(&erm_rows, &params.spec.beta_star);
    let (mse_dro, mse_dro_se) = mse_and_se(&dro_rows, &params.spec.beta_star);
    let mut erm_mean = Vec::with_capacity(d);
    let mut erm_mean_se = Vec::with_capacity(d);
    let mut dro_mean = Vec::with_capacity(d);
    let mut dro_mean_se = Vec::with_capacity(d);
    for k in 0..d {
        let (m, s) = mean_and_se(&erm_rows, k);
        erm_mean.push(m);
        erm_mean_se.push(s);
        let (m, s) = mean_and_se(&dro_rows, k);
        dro_mean.push(m);
        dro_mean_se.push(s);
    }
    Ok(ScatterOutcome {
        params: params.clone(),
        failures,
        erm: erm_rows,
        dro: dro_rows,
        mse_erm,
        mse_dro,
        mse_erm_se,
        mse_dro_se,
        erm_mean,
        dro_mean,
        erm_mean_se,
        dro_mean_se,
    })
}

pub fn csv_text(outcome: &ScatterOutcome) -> String {
    let d = outcome.params.spec.dim();
    let mut header = String::from("replication");
    for k in 1..=d {
        header.push_str(&format!(",erm_{k}"));
    }
    for k in 1..=d {
        header.push_str(&format!(",dro_{k}"));
    }
    header.push('\n');
    let mut out = header;
    for (i, (erm, dro)) in outcome.erm.iter().zip(&outcome.dro).enumerate() {
        out.push_str(&i.to_string());
        for x in erm.iter().chain(dro) {
            out.push(',');
            out.push_str(&fmt_f64(*x));
        }
        out.push('\n');
    }
    out
}

pub fn run(cfg: &Config, seed_flag: Option<u64>, out: &Path) -> Result<ScatterOutcome, CliError> {
    let seed = resolve_seed(seed_flag, cfg, "scatter.seed")?;
    let spec = model_spec_from(cfg, true)?;
    let params = ScatterParams {
        spec,
        p: cfg.f64_or("scatter.p", 2.0)?,
        alpha: cfg.f64_or("scatter.alpha", 0.05)?,
        mc_draws: cfg.usize_or("scatter.mc_draws", 10_000)?,
        replications: cfg.require_usize("scatter.replications")?,
        seed,
    };
    cfg.finish()?;

    let mut run_dir = RunDir::create(out)?;
    run_dir.write_config_echo(cfg)?;
    run_dir.mark("setup");

    let outcome = run_engine(&params)?;
    run_dir.mark("replications");

    run_dir.write_text("scatter.csv", &csv_text(&outcome))?;
    let payload = serde_json::json!({
        "n": params.spec.n,
        "beta_star": params.spec.beta_star,
        "rho": params.spec.rho,
        "sigma2": params.spec.sigma2,
        "p": crate::csvio::p_label(params.p),
        "alpha": params.alpha,
        "mc_draws": params.mc_draws,
        "replications": params.replications,
        "failures": outcome.failures,
        "seed": params.seed,
        "mse_erm": outcome.mse_erm,
        "mse_erm_se": outcome.mse_erm_se,
        "mse_dro": outcome.mse_dro,
        "mse_dro_se": outcome.mse_dro_se,
        "erm_mean": outcome.erm_mean,
        "erm_mean_se": outcome.erm_mean_se,
        "dro_mean": outcome.dro_mean,
        "dro_mean_se": outcome.dro_mean_se,
    });
    run_dir.write_report(&report_envelope("scatter", cfg, payload))?;
    if params.spec.dim() == 2 {
        let plot = format!(
            "# gnuplot script: paired estimates around the generating parameter\n\
             set datafile separator ','\n\
             set size ratio -1\n\
             set key outside\n\
             plot 'scatter.csv' skip 1 using 2:3 with points pointtype 6 title 'empirical', \\\n\
                  'scatter.csv' skip 1 using 4:5 with points pointtype 7 title 'robust', \\\n\
                  '-' with points pointtype 3 pointsize 2 title 'generating parameter'\n\
             {} {}\ne\n",
            fmt_f64(params.spec.beta_star[0]),
            fmt_f64(params.spec.beta_star[1]),
        );
        run_dir.write_text("plot.gp", &plot)?;
    }
    run_dir.mark("write");
    run_dir.write_timings()?;

    println!(
        "scatter: {} replications (n = {}, beta_star = [{}], rho = {})",
        params.replications,
        params.spec.n,
        fmt_vec(&params.spec.beta_star),
        params.spec.rho
    );
    println!(
        "  mse empirical = {:.6} (se {:.6}), mse robust = {:.6} (se {:.6}), failures {}",
        outcome.mse_erm, outcome.mse_erm_se, outcome.mse_dro, outcome.mse_dro_se, outcome.failures
    );
    println!("  wrote {}", run_dir.path().display());
    Ok(outcome)
}
