//! Experiment catalogue, run configuration, persistence, the property suite
//! and the command-line front end.

pub mod catalogue;
pub mod cli;
pub mod config;
pub mod record;
pub mod tables;
pub mod verify;

pub use config::RunConfig;
pub use record::RunRecord;

use crate::error::Result;
use crate::optimizer::{train_with, CurveRow};

/// Trains one configuration and writes its curve and record files into
/// `cfg.output`. Diverged runs still write their files.
pub fn run_config(cfg: &RunConfig, threads: usize) -> Result<RunRecord> {
    run_config_with(cfg, threads, |_| {})
}

/// [`run_config`] reporting each curve row as it is recorded.
pub fn run_config_with(cfg: &RunConfig, threads: usize, on_row: impl FnMut(&CurveRow)) -> Result<RunRecord> {
    let problem = catalogue::build_problem(cfg)?;
    let outcome = train_with(&problem, &cfg.train_options(threads), on_row)?;
    let rec = RunRecord::from_outcome(cfg, outcome);
    rec.write(&cfg.output)?;
    Ok(rec)
}
