//! Command-line harness over the estimation library: run configs in,
//! CSV and JSON artifacts out. Every command writes a self-contained
//! run directory whose deterministic artifacts are byte-identical
//! across reruns with equal inputs; wall-clock timings live in their
//! own file so the rest can be diffed.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod output;
