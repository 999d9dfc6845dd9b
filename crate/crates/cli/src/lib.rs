//! Scenario runner for the `qbeat` double-well laboratory: TOML configs, built-in
//! presets, single runs with deterministic CSV/JSON artifacts, and parameter sweeps.

pub mod cli;
pub mod config;
pub mod presets;
pub mod runner;
pub mod sweep;
