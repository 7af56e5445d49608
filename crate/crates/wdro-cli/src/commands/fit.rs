//! `wdro fit`: one dataset, both estimators.
//!
//! Fits the empirical minimizer, calibrates the robust radius at the
//! requested level (unless `fit.delta` pins it), fits the robust
//! estimator at that radius, and writes `fit.json`.

use super::{calibrate_radius, fmt_vec, load_dataset, resolve_seed, CliError};
use crate::config::Config;
use crate::csvio::p_label;
use crate::output::{report_envelope, RunDir};
use std::path::Path;
use wdro_core::estimators::{fit_dro, fit_erm, EstimatorResult};
use wdro_core::model::LinearRegressionLoss;
use wdro_core::norms::NormSpec;

pub struct FitOutcome {
    pub erm: EstimatorResult,
    pub dro: EstimatorResult,
    pub delta: f64,
    pub eta_alpha: Option<f64>,
    pub quantile_se: Option<f64>,
    pub alpha: f64,
    pub p: f64,
    pub seed: u64,
    pub n: usize,
    pub dim: usize,
}

pub fn run(cfg: &Config, seed_flag: Option<u64>, out: &Path) -> Result<FitOutcome, CliError> {
    let seed = resolve_seed(seed_flag, cfg, "fit.seed")?;
    let p = cfg.f64_or("fit.p", 2.0)?;
    let alpha = cfg.f64_or("fit.alpha", 0.05)?;
    let mc_draws = cfg.usize_or("fit.mc_draws", 10_000)?;
    let delta_override = cfg.f64_opt("fit.delta")?;
    if let Some(d) = delta_override {
        if !(d >= 0.0) {
            return Err(CliError::Invalid(format!(
                "fit.delta must be nonnegative, got {d}"
            )));
        }
    }
    let loaded = load_dataset(cfg, seed)?;
    cfg.finish()?;

    let mut run_dir = RunDir::create(out)?;
    run_dir.write_config_echo(cfg)?;
    run_dir.mark("setup");

    let model = LinearRegressionLoss::new(loaded.dim)?;
    let norm = NormSpec::from_p(p)?;
    let erm = fit_erm(&model, &loaded.data, 1e-9)?;
    run_dir.mark("erm_fit");

    let (delta, eta_alpha, quantile_se) = match delta_override {
        Some(d) => (d, None, None),
        None => {
            let (delta, cal) = calibrate_radius(
                &model,
                &loaded.data,
                &erm.beta_hat,
                norm,
                alpha,
                mc_draws,
                seed,
            )?;
            (delta, Some(cal.eta_alpha), Some(cal.quantile_se))
        }
    };
    run_dir.mark("calibration");

    let dro = fit_dro(&model, &loaded.data, delta, &norm, 1e-9)?;
    run_dir.mark("dro_fit");

    let outcome = FitOutcome {
        erm,
        dro,
        delta,
        eta_alpha,
        quantile_se,
        alpha,
        p,
        seed,
        n: loaded.data.n(),
        dim: loaded.dim,
    };

    let payload = serde_json::json!({
        "erm": outcome.erm,
        "dro": outcome.dro,
        "delta": outcome.delta,
        "eta_alpha": outcome.eta_alpha,
        "quantile_se": outcome.quantile_se,
        "alpha": outcome.alpha,
        "p": p_label(p),
        "seed": outcome.seed,
        "n": outcome.n,
        "dim": outcome.dim,
        "data_source": loaded.source,
    });
    let mut text = serde_json::to_string_pretty(&payload)
        .map_err(|e| CliError::Io(format!("cannot serialize fit.json: {e}")))?;
    text.push('\n');
    run_dir.write_text("fit.json", &text)?;
    run_dir.write_report(&report_envelope("fit", cfg, payload))?;
    run_dir.mark("write");
    run_dir.write_timings()?;

    println!(
        "fit: n = {}, d = {}, p = {}, alpha = {}",
        outcome.n,
        outcome.dim,
        p_label(p),
        outcome.alpha
    );
    println!("  erm beta = [{}]", fmt_vec(&outcome.erm.beta_hat));
    println!("  dro beta = [{}]", fmt_vec(&outcome.dro.beta_hat));
    match outcome.eta_alpha {
        Some(eta) => println!("  delta = {} (eta_alpha = {eta})", outcome.delta),
        None => println!("  delta = {} (from config)", outcome.delta),
    }
    println!("  wrote {}", run_dir.path().join("fit.json").display());
    Ok(outcome)
}
