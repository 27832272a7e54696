//! Scenario runner for the coherent receiver simulator: named scenarios,
//! config files, device characterization, link runs, sweeps and artifact
//! output.

pub mod characterize;
pub mod config;
pub mod error;
pub mod scenarios;
pub mod commands;
pub mod output;
pub mod svg;
