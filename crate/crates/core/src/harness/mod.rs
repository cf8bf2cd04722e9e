//! Monte Carlo experiment engine: configuration, seeded end-to-end trials and
//! sweep aggregation into CSV tables.

pub mod config;
pub mod stats;
pub mod sweep;
pub mod trial;

pub use config::{Axis, ExperimentConfig, NoiseSweep, OffsetModel, Scenario, SCHEMA_VERSION};
pub use stats::{wilson_interval, MeanAccumulator, Z95};
pub use sweep::{run_sweep, run_trials, summarize, trial_seed, write_csv, Executor, SweepRow, CSV_HEADER};
pub use trial::{draw_trial, run_trial, DetectorOutcome, FailureKind, TrialDraw, TrialResult};
