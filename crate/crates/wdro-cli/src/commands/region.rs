//! `wdro region`: boundary export of the confidence regions.
//!
//! Builds the robust region at each requested exponent, the classical
//! ellipse, and optionally the Mahalanobis-calibrated region, then
//! writes one polygon CSV per region plus a gnuplot script that
//! overlays them.

use super::{load_dataset, polygon_csv, resolve_seed, CliError};
use crate::config::Config;
use crate::csvio::p_label;
use crate::output::{report_envelope, RunDir};
use std::path::Path;
use wdro_core::model::LinearRegressionLoss;
use wdro_core::regions::{
    build_clt_region, build_mahalanobis_region, build_wdro_region, build_wdro_region_for_plots,
    Region,
};
use wdro_core::rng::mix;

pub struct RegionOutcome {
    pub labels: Vec<String>,
    pub regions: Vec<Region>,
}

fn region_summary(region: &Region, label: &str, csv: &str) -> serde_json::Value {
    serde_json::json!({
        "label": label,
        "csv": csv,
        "kind": match region.kind {
            wdro_core::regions::RegionKind::Wdro => "wdro",
            wdro_core::regions::RegionKind::Clt => "clt",
        },
        "p": region.meta.p.map(p_label),
        "alpha": region.meta.alpha,
        "threshold": region.meta.threshold,
        "delta_n": region.meta.delta_n,
        "guarantee": region.meta.guarantee,
        "quantile_se": region.meta.quantile_se,
        "mahalanobis_cost": region.meta.mahalanobis_cost,
        "center": region.center,
    })
}

pub fn run(cfg: &Config, seed_flag: Option<u64>, out: &Path) -> Result<RegionOutcome, CliError> {
    let seed = resolve_seed(seed_flag, cfg, "region.seed")?;
    let p_list = if cfg.has("region.p_list") {
        cfg.require_f64_list("region.p_list")?
    } else {
        vec![1.0, 1.5, 2.0, 3.0, f64::INFINITY]
    };
    let alpha = cfg.f64_or("region.alpha", 0.05)?;
    let mc_draws = cfg.usize_or("region.mc_draws", 10_000)?;
    let directions = cfg.usize_or("region.directions", 128)?;
    let mahalanobis = cfg.bool_or("region.mahalanobis", false)?;
    let loaded = load_dataset(cfg, seed)?;
    cfg.finish()?;
    if loaded.dim != 2 {
        return Err(CliError::NotPlanar(loaded.dim));
    }

    let mut run_dir = RunDir::create(out)?;
    run_dir.write_config_echo(cfg)?;
    run_dir.mark("setup");

    let model = LinearRegressionLoss::new(2)?;
    let mut labels = Vec::new();
    let mut regions = Vec::new();
    let mut files = Vec::new();
    let mut summaries = Vec::new();

    for (k, &p) in p_list.iter().enumerate() {
        let seed_k = mix(seed, (k + 1) as u64);
        let region = if p > 1.0 && p.is_finite() {
            build_wdro_region(&model, &loaded.data, p, alpha, mc_draws, seed_k)?
        } else {
            build_wdro_region_for_plots(&model, &loaded.data, p, alpha, mc_draws, seed_k)?
        };
        let label = format!("p = {}", p_label(p));
        let csv_name = format!("region_p_{}.csv", p_label(p));
        run_dir.write_text(&csv_name, &polygon_csv(&region, directions)?)?;
        summaries.push(region_summary(&region, &label, &csv_name));
        files.push((csv_name, label.clone()));
        labels.push(label);
        regions.push(region);
    }
    run_dir.mark("wdro_regions");

    let clt = build_clt_region(&loaded.data, alpha)?;
    run_dir.write_text("region_clt.csv", &polygon_csv(&clt, directions)?)?;
    summaries.push(region_summary(&clt, "CLT", "region_clt.csv"));
    files.push(("region_clt.csv".to_string(), "CLT".to_string()));
    labels.push("CLT".to_string());
    regions.push(clt);

    if mahalanobis {
        let mreg =
            build_mahalanobis_region(&loaded.data, alpha, mc_draws, mix(seed, 0xA11))?;
        run_dir.write_text("region_mahalanobis.csv", &polygon_csv(&mreg, directions)?)?;
        summaries.push(region_summary(&mreg, "Mahalanobis", "region_mahalanobis.csv"));
        files.push(("region_mahalanobis.csv".to_string(), "Mahalanobis".to_string()));
        labels.push("Mahalanobis".to_string());
        regions.push(mreg);
    }
    run_dir.mark("reference_regions");

    let mut plot = String::from(
        "# gnuplot script: confidence region boundaries\n\
         set datafile separator ','\n\
         set size ratio -1\n\
         set key outside\n\
         set xlabel 'beta_1'\n\
         set ylabel 'beta_2'\n\
         plot \\\n",
    );
    for (i, (file, label)) in files.iter().enumerate() {
        let sep = if i + 1 == files.len() { "\n" } else { ", \\\n" };
        plot.push_str(&format!(
            "  '{file}' skip 1 using 6:7 with lines title '{label}'{sep}"
        ));
    }
    run_dir.write_text("plot.gp", &plot)?;

    let payload = serde_json::json!({
        "n": loaded.data.n(),
        "alpha": alpha,
        "directions": directions,
        "seed": seed,
        "center": regions[0].center,
        "data_source": loaded.source,
        "regions": summaries,
    });
    run_dir.write_report(&report_envelope("region", cfg, payload))?;
    run_dir.mark("write");
    run_dir.write_timings()?;

    println!(
        "region: n = {}, alpha = {alpha}, {} boundaries x {directions} directions",
        loaded.data.n(),
        files.len()
    );
    println!(
        "  center = [{}], wrote {}",
        super::fmt_vec(&regions[0].center),
        run_dir.path().display()
    );
    Ok(RegionOutcome { labels, regions })
}
