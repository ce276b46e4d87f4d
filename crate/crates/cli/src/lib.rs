//! Experiment runner: configuration parsing, data ingestion, recovery
//! suites, and result emission (CSV, PGM, key=value summaries).

pub mod config;
pub mod experiment;
pub mod io;
