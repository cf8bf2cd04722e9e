use std::io::Write;

use serde::Serialize;

use super::config::{Axis, ExperimentConfig, Scenario};
use super::stats::{wilson_interval, MeanAccumulator, Z95};
use super::trial::{run_trial, FailureKind, TrialResult};
use crate::detect::DetectorKind;
use crate::error::{Error, Result};

/// Frozen CSV header of sweep tables.
pub const CSV_HEADER: [&str; 17] = [
    "sweep_value",
    "trials",
    "failures",
    "timing_mse",
    "timing_mse_se",
    "ser_zf",
    "ser_zf_lo",
    "ser_zf_hi",
    "ser_ml",
    "ser_count",
    "ser_ml_lo",
    "ser_ml_hi",
    "ser_count_lo",
    "ser_count_hi",
    "fail_bias",
    "fail_spikes",
    "fail_rank",
];

/// How trials of one sweep point are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Executor {
    Sequential,
    /// Rayon work stealing; falls back to sequential without the `parallel` feature.
    #[default]
    Parallel,
}

/// Seed of trial `index`: `base_seed + index`, wrapping.
pub fn trial_seed(base_seed: u64, index: usize) -> u64 {
    base_seed.wrapping_add(index as u64)
}

/// Runs `trials` seeded trials; results are ordered by trial index.
pub fn run_trials(scenario: &Scenario, base_seed: u64, trials: usize, executor: Executor) -> Vec<TrialResult> {
    match executor {
        #[cfg(feature = "parallel")]
        Executor::Parallel => {
            use rayon::prelude::*;
            (0..trials)
                .into_par_iter()
                .map(|i| run_trial(scenario, trial_seed(base_seed, i)))
                .collect()
        }
        _ => (0..trials).map(|i| run_trial(scenario, trial_seed(base_seed, i))).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SerSummary {
    pub ser: f64,
    pub lo: f64,
    pub hi: f64,
    pub errors: u64,
    pub symbols: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub trials: usize,
    pub failures: usize,
    pub timing_mse: Option<f64>,
    pub timing_mse_se: Option<f64>,
    pub ser_zf: Option<SerSummary>,
    pub ser_ml: Option<SerSummary>,
    pub ser_count: Option<SerSummary>,
    pub fail_bias: usize,
    pub fail_spikes: usize,
    pub fail_rank: usize,
}

/// Aggregates trial results in index order. Failed trials only count as failures.
pub fn summarize(sweep_value: f64, scenario: &Scenario, results: &[TrialResult]) -> SweepRow {
    let mut mse = MeanAccumulator::default();
    let mut failures = [0usize; 4];
    let kinds = [DetectorKind::Zf, DetectorKind::MlBruteforce, DetectorKind::SpikeCount];
    let mut errors = [0u64; 3];
    let mut valid = 0u64;
    for r in results {
        if let Some(kind) = r.failure {
            failures[kind as usize] += 1;
            continue;
        }
        valid += 1;
        if let Some(e) = r.timing_sq_error {
            mse.push(e);
        }
        for (slot, kind) in kinds.iter().enumerate() {
            if let Some(o) = r.outcome(*kind) {
                errors[slot] += o.symbol_errors as u64;
            }
        }
    }
    let symbols = valid * scenario.data_len as u64;
    let ser = |slot: usize| {
        (scenario.runs(kinds[slot]) && symbols > 0).then(|| {
            let (lo, hi) = wilson_interval(errors[slot], symbols, Z95);
            SerSummary { ser: errors[slot] as f64 / symbols as f64, lo, hi, errors: errors[slot], symbols }
        })
    };
    SweepRow {
        sweep_value,
        trials: results.len(),
        failures: failures.iter().sum(),
        timing_mse: mse.mean(),
        timing_mse_se: mse.standard_error(),
        ser_zf: ser(0),
        ser_ml: ser(1),
        ser_count: ser(2),
        fail_bias: failures[FailureKind::BiasTooSmall as usize],
        fail_spikes: failures[FailureKind::InsufficientSpikes as usize],
        fail_rank: failures[FailureKind::RankDeficient as usize],
    }
}

/// One aggregate row per point of `axis`; every point reuses the same trial seeds.
pub fn run_sweep(config: &ExperimentConfig, axis: Axis, executor: Executor) -> Result<Vec<SweepRow>> {
    if config.trials == 0 {
        return Ok(Vec::new());
    }
    config
        .sweep_points(axis)?
        .iter()
        .map(|(value, scenario)| {
            let results = run_trials(scenario, config.base_seed, config.trials, executor);
            Ok(summarize(*value, scenario, &results))
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl SweepRow {
    fn record(&self) -> Vec<String> {
        let field = |s: &Option<SerSummary>, f: fn(&SerSummary) -> f64| opt(s.as_ref().map(f));
        vec![
            self.sweep_value.to_string(),
            self.trials.to_string(),
            self.failures.to_string(),
            opt(self.timing_mse),
            opt(self.timing_mse_se),
            field(&self.ser_zf, |s| s.ser),
            field(&self.ser_zf, |s| s.lo),
            field(&self.ser_zf, |s| s.hi),
            field(&self.ser_ml, |s| s.ser),
            field(&self.ser_count, |s| s.ser),
            field(&self.ser_ml, |s| s.lo),
            field(&self.ser_ml, |s| s.hi),
            field(&self.ser_count, |s| s.lo),
            field(&self.ser_count, |s| s.hi),
            self.fail_bias.to_string(),
            self.fail_spikes.to_string(),
            self.fail_rank.to_string(),
        ]
    }
}

/// Writes the header and one line per row. Empty fields mark disabled
/// detectors or points without a valid trial.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidArgument(format!("csv output: {e}"));
    writer.write_record(CSV_HEADER).map_err(io)?;
    for row in rows {
        writer.write_record(row.record()).map_err(io)?;
    }
    writer.flush().map_err(|e| Error::InvalidArgument(format!("csv output: {e}")))?;
    Ok(())
}
