//! Run directories.
//!
//! Every invocation writes into one directory: `config.echo`, the
//! command's CSVs, a deterministic `report.json`, a `plot.gp` script,
//! and `timings.txt`. Everything except `timings.txt` is byte
//! determined by config + seed; wall-clock measurements are quarantined
//! in their own file so runs stay diffable.

use crate::config::Config;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub struct RunDir {
    path: PathBuf,
    timings: Vec<(String, f64)>,
    started: Instant,
    last_mark: Instant,
}

impl RunDir {
    pub fn create(path: &Path) -> Result<Self, String> {
        std::fs::create_dir_all(path)
            .map_err(|e| format!("cannot create output directory {}: {e}", path.display()))?;
        let now = Instant::now();
        Ok(Self {
            path: path.to_path_buf(),
            timings: Vec::new(),
            started: now,
            last_mark: now,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write_text(&self, name: &str, content: &str) -> Result<(), String> {
        let target = self.path.join(name);
        std::fs::write(&target, content)
            .map_err(|e| format!("cannot write {}: {e}", target.display()))
    }

    pub fn write_config_echo(&self, cfg: &Config) -> Result<(), String> {
        self.write_text("config.echo", &cfg.echo())
    }

    /// Deterministic JSON: sorted object keys (serde_json's default map
    /// is ordered) and shortest round-trip numbers.
    pub fn write_report(&self, report: &serde_json::Value) -> Result<(), String> {
        let mut text = serde_json::to_string_pretty(report)
            .map_err(|e| format!("cannot serialize report: {e}"))?;
        text.push('\n');
        self.write_text("report.json", &text)
    }

    /// Records the wall-clock span since the previous mark (or start).
    pub fn mark(&mut self, phase: &str) {
        let now = Instant::now();
        self.timings
            .push((phase.to_string(), now.duration_since(self.last_mark).as_secs_f64()));
        self.last_mark = now;
    }

    pub fn write_timings(&self) -> Result<(), String> {
        let mut out = String::new();
        for (phase, secs) in &self.timings {
            out.push_str(&format!("{phase}: {secs:.3}s\n"));
        }
        out.push_str(&format!(
            "total: {:.3}s\n",
            self.started.elapsed().as_secs_f64()
        ));
        self.write_text("timings.txt", &out)
    }
}

/// Shared report envelope: artifact version, command, config echo.
pub fn report_envelope(command: &str, cfg: &Config, payload: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "artifact_version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": cfg.as_json(),
        "result": payload,
    })
}
