//! `wdro coverage`: the coverage experiment.
//!
//! For every (beta_star, rho) cell, R independent replications each
//! generate a dataset, fit the empirical minimizer, calibrate the
//! radius, build the robust and the classical region, fit the robust
//! estimator at delta_n = eta / n, and record which of the four
//! membership events hold. Frequencies come with binomial standard
//! errors, and the mean calibrated threshold with its quantile SE so
//! the Monte Carlo budget's influence is visible in the output.
//!
//! Replications run on the worker pool but are reduced in replication
//! order, so reports are identical whatever the thread count.

use super::{fmt_vec, resolve_seed, CliError};
use crate::config::Config;
use crate::csvio::fmt_f64;
use crate::output::{report_envelope, RunDir};
use rayon::prelude::*;
use std::path::Path;
use wdro_core::estimators::fit_dro;
use wdro_core::linalg;
use wdro_core::model::{generate_regression_data, GaussianRegressionSpec, LinearRegressionLoss};
use wdro_core::norms::NormSpec;
use wdro_core::regions::{build_clt_region, build_wdro_region};
use wdro_core::rng::mix;

#[derive(Debug, Clone)]
pub struct CoverageParams {
    pub n: usize,
    pub sigma2: f64,
    pub beta_star_list: Vec<Vec<f64>>,
    pub rho_list: Vec<f64>,
    pub p: f64,
    pub alpha: f64,
    pub mc_draws: usize,
    pub replications: usize,
    pub seed: u64,
}

/// One (beta_star, rho) cell: event counts over the successful
/// replications plus the calibration summary.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub beta_star: Vec<f64>,
    pub rho: f64,
    pub replications: usize,
    pub failures: usize,
    pub dro_in_wdro: usize,
    pub star_in_wdro: usize,
    pub dro_in_clt: usize,
    pub star_in_clt: usize,
    pub eta_mean: f64,
    pub eta_quantile_se_mean: f64,
}

impl CellResult {
    pub fn successes(&self) -> usize {
        self.replications - self.failures
    }

    pub fn freq(&self, count: usize) -> f64 {
        count as f64 / self.successes() as f64
    }

    /// Binomial standard error sqrt(p(1-p)/R).
    pub fn se(&self, count: usize) -> f64 {
        let p = self.freq(count);
        (p * (1.0 - p) / self.successes() as f64).sqrt()
    }
}

#[derive(Debug)]
pub struct CoverageOutcome {
    pub params: CoverageParams,
    pub cells: Vec<CellResult>,
}

struct RepEvents {
    dro_in_wdro: bool,
    star_in_wdro: bool,
    dro_in_clt: bool,
    star_in_clt: bool,
    eta: f64,
    quantile_se: f64,
}

fn run_one_rep(
    spec: &GaussianRegressionSpec,
    params: &CoverageParams,
    norm: &NormSpec,
    rep_seed: u64,
) -> Result<RepEvents, CliError> {
    let data = generate_regression_data(spec, rep_seed)?;
    let model = LinearRegressionLoss::new(spec.dim())?;
    let wdro = build_wdro_region(&model, &data, params.p, params.alpha, params.mc_draws, rep_seed)?;
    let clt = build_clt_region(&data, params.alpha)?;
    let delta = wdro
        .meta
        .delta_n
        .expect("robust regions always carry a radius");
    let dro = fit_dro(&model, &data, delta, norm, 1e-9)?;
    if !dro.converged {
        return Err(CliError::Invalid(
            "robust fit did not reach tolerance".to_string(),
        ));
    }
    Ok(RepEvents {
        dro_in_wdro: wdro.contains(&dro.beta_hat),
        star_in_wdro: wdro.contains(&spec.beta_star),
        dro_in_clt: clt.contains(&dro.beta_hat),
        star_in_clt: clt.contains(&spec.beta_star),
        eta: wdro.meta.threshold,
        quantile_se: wdro.meta.quantile_se.unwrap_or(0.0),
    })
}

/// The experiment proper, callable without a config file.
pub fn run_engine(params: &CoverageParams) -> Result<CoverageOutcome, CliError> {
    if params.replications < 100 {
        return Err(CliError::Invalid(format!(
            "coverage needs at least 100 replications, got {}",
            params.replications
        )));
    }
    if params.beta_star_list.is_empty() || params.rho_list.is_empty() {
        return Err(CliError::Invalid(
            "coverage needs at least one beta_star and one rho".to_string(),
        ));
    }
    let norm = NormSpec::from_p(params.p)?;
    let mut cells = Vec::new();
    let mut cell_index: u64 = 0;
    for beta_star in &params.beta_star_list {
        for &rho in &params.rho_list {
            let spec = GaussianRegressionSpec {
                n: params.n,
                beta_star: beta_star.clone(),
                rho,
                sigma2: params.sigma2,
            };
            let cell_key = mix(params.seed, cell_index);
            let outcomes: Vec<Result<RepEvents, String>> = (0..params.replications)
                .into_par_iter()
                .map(|rep| {
                    run_one_rep(&spec, params, &norm, mix(cell_key, rep as u64))
                        .map_err(|e| e.to_string())
                })
                .collect();

            let cell_name = format!("beta_star = [{}], rho = {rho}", fmt_vec(beta_star));
            let mut cell = CellResult {
                beta_star: beta_star.clone(),
                rho,
                replications: params.replications,
                failures: 0,
                dro_in_wdro: 0,
                star_in_wdro: 0,
                dro_in_clt: 0,
                star_in_clt: 0,
                eta_mean: 0.0,
                eta_quantile_se_mean: 0.0,
            };
            let mut etas = Vec::new();
            let mut ses = Vec::new();
            for (rep, outcome) in outcomes.iter().enumerate() {
                match outcome {
                    Ok(ev) => {
                        cell.dro_in_wdro += ev.dro_in_wdro as usize;
                        cell.star_in_wdro += ev.star_in_wdro as usize;
                        cell.dro_in_clt += ev.dro_in_clt as usize;
                        cell.star_in_clt += ev.star_in_clt as usize;
                        etas.push(ev.eta);
                        ses.push(ev.quantile_se);
                    }
                    Err(msg) => {
                        cell.failures += 1;
                        eprintln!("coverage: {cell_name}, replication {rep} failed: {msg}");
                    }
                }
            }
            if cell.failures * 100 > params.replications {
                return Err(CliError::TooManyFailures {
                    cell: cell_name,
                    failures: cell.failures,
                    replications: params.replications,
                });
            }
            if !etas.is_empty() {
                cell.eta_mean = linalg::pairwise_sum(&etas) / etas.len() as f64;
                cell.eta_quantile_se_mean = linalg::pairwise_sum(&ses) / ses.len() as f64;
            }
            cells.push(cell);
            cell_index += 1;
        }
    }
    Ok(CoverageOutcome {
        params: params.clone(),
        cells,
    })
}

pub fn csv_text(outcome: &CoverageOutcome) -> String {
    let mut out = String::from(
        "beta_star,rho,replications,failures,\
         cover_dro_wdro,se_dro_wdro,cover_star_wdro,se_star_wdro,\
         cover_dro_clt,se_dro_clt,cover_star_clt,se_star_clt,\
         eta_mean,eta_quantile_se_mean\n",
    );
    for cell in &outcome.cells {
        let beta = cell
            .beta_star
            .iter()
            .map(|x| fmt_f64(*x))
            .collect::<Vec<_>>()
            .join(" ");
        out.push_str(&format!(
            "{beta},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f64(cell.rho),
            cell.replications,
            cell.failures,
            fmt_f64(cell.freq(cell.dro_in_wdro)),
            fmt_f64(cell.se(cell.dro_in_wdro)),
            fmt_f64(cell.freq(cell.star_in_wdro)),
            fmt_f64(cell.se(cell.star_in_wdro)),
            fmt_f64(cell.freq(cell.dro_in_clt)),
            fmt_f64(cell.se(cell.dro_in_clt)),
            fmt_f64(cell.freq(cell.star_in_clt)),
            fmt_f64(cell.se(cell.star_in_clt)),
            fmt_f64(cell.eta_mean),
            fmt_f64(cell.eta_quantile_se_mean),
        ));
    }
    out
}

fn cells_json(outcome: &CoverageOutcome) -> serde_json::Value {
    let cells: Vec<serde_json::Value> = outcome
        .cells
        .iter()
        .map(|cell| {
            serde_json::json!({
                "beta_star": cell.beta_star,
                "rho": cell.rho,
                "replications": cell.replications,
                "failures": cell.failures,
                "cover_dro_wdro": cell.freq(cell.dro_in_wdro),
                "se_dro_wdro": cell.se(cell.dro_in_wdro),
                "cover_star_wdro": cell.freq(cell.star_in_wdro),
                "se_star_wdro": cell.se(cell.star_in_wdro),
                "cover_dro_clt": cell.freq(cell.dro_in_clt),
                "se_dro_clt": cell.se(cell.dro_in_clt),
                "cover_star_clt": cell.freq(cell.star_in_clt),
                "se_star_clt": cell.se(cell.star_in_clt),
                "eta_mean": cell.eta_mean,
                "eta_quantile_se_mean": cell.eta_quantile_se_mean,
            })
        })
        .collect();
    serde_json::Value::Array(cells)
}

pub fn run(cfg: &Config, seed_flag: Option<u64>, out: &Path) -> Result<CoverageOutcome, CliError> {
    let seed = resolve_seed(seed_flag, cfg, "coverage.seed")?;
    let params = CoverageParams {
        n: cfg.require_usize("coverage.n")?,
        sigma2: cfg.f64_or("coverage.sigma2", 1.0)?,
        beta_star_list: cfg.require_vector_list("coverage.beta_star_list")?,
        rho_list: cfg.require_f64_list("coverage.rho_list")?,
        p: cfg.f64_or("coverage.p", 2.0)?,
        alpha: cfg.f64_or("coverage.alpha", 0.05)?,
        mc_draws: cfg.usize_or("coverage.mc_draws", 10_000)?,
        replications: cfg.require_usize("coverage.replications")?,
        seed,
    };
    cfg.finish()?;

    let mut run_dir = RunDir::create(out)?;
    run_dir.write_config_echo(cfg)?;
    run_dir.mark("setup");

    let outcome = run_engine(&params)?;
    run_dir.mark("replications");

    run_dir.write_text("coverage.csv", &csv_text(&outcome))?;
    let payload = serde_json::json!({
        "n": params.n,
        "p": crate::csvio::p_label(params.p),
        "alpha": params.alpha,
        "mc_draws": params.mc_draws,
        "replications": params.replications,
        "seed": params.seed,
        "cells": cells_json(&outcome),
    });
    run_dir.write_report(&report_envelope("coverage", cfg, payload))?;
    let plot = "# gnuplot script: coverage of the true parameter per cell\n\
                set datafile separator ','\n\
                set yrange [0:1]\n\
                set xlabel 'cell index'\n\
                set ylabel 'coverage'\n\
                plot 'coverage.csv' skip 1 using 0:7 with points pointtype 7 title 'robust region, true parameter', \\\n\
                     'coverage.csv' skip 1 using 0:11 with points pointtype 6 title 'classical region, true parameter'\n";
    run_dir.write_text("plot.gp", plot)?;
    run_dir.mark("write");
    run_dir.write_timings()?;

    println!(
        "coverage: {} cells x {} replications (n = {}, p = {}, alpha = {})",
        outcome.cells.len(),
        params.replications,
        params.n,
        crate::csvio::p_label(params.p),
        params.alpha
    );
    for cell in &outcome.cells {
        println!(
            "  beta_star = [{}], rho = {}: star in robust {:.3} (se {:.3}), dro in robust {:.3}, dro in classical {:.3}, failures {}",
            fmt_vec(&cell.beta_star),
            cell.rho,
            cell.freq(cell.star_in_wdro),
            cell.se(cell.star_in_wdro),
            cell.freq(cell.dro_in_wdro),
            cell.freq(cell.dro_in_clt),
            cell.failures,
        );
    }
    println!("  wrote {}", run_dir.path().display());
    Ok(outcome)
}
