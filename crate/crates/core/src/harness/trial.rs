use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{OffsetModel, Scenario};
use crate::detect::{
    brute_force_ml, build_detection_system, detect_zf, spike_count_detect, DetectorKind, SymbolEstimate,
};
use crate::error::{Error, Result};
use crate::tem::{encode, split_firing_times, NoiseModel};
use crate::timing::estimate_tau_ml;
use crate::waveform::{Frame, TxSignal};

/// Why a trial was excluded from the averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    BiasTooSmall,
    InsufficientSpikes,
    RankDeficient,
    Other,
}

impl From<&Error> for FailureKind {
    fn from(e: &Error) -> Self {
        match e {
            Error::BiasTooSmall { .. } => FailureKind::BiasTooSmall,
            Error::InsufficientPilotSpikes { .. } | Error::InsufficientDataAnchor => {
                FailureKind::InsufficientSpikes
            }
            Error::RankDeficient { .. } => FailureKind::RankDeficient,
            _ => FailureKind::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectorOutcome {
    pub detector: DetectorKind,
    pub symbol_errors: usize,
    pub ser: f64,
    pub decided: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub seed: u64,
    pub tau_true: f64,
    pub tau_hat: Option<f64>,
    /// `((τ̂ - τ_ε) / T)²`.
    pub timing_sq_error: Option<f64>,
    pub data: Vec<f64>,
    pub detectors: Vec<DetectorOutcome>,
    /// Firings in the whole record, in the timing window and in the data window.
    pub firings: usize,
    pub pilot_firings: usize,
    pub data_intervals: usize,
    pub failure: Option<FailureKind>,
    pub failure_message: Option<String>,
}

impl TrialResult {
    pub fn outcome(&self, kind: DetectorKind) -> Option<&DetectorOutcome> {
        self.detectors.iter().find(|o| o.detector == kind)
    }
}

/// Frame, offset and noise seed drawn for a trial.
///
/// The frame and offset come from stream 0 of a ChaCha8 generator seeded with
/// the trial seed, the noise seed from stream 1, so changing the noise level
/// never changes the transmitted frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDraw {
    pub frame: Frame,
    pub tau: f64,
    pub noise_seed: u64,
}

pub fn draw_trial(scenario: &Scenario, seed: u64) -> Result<TrialDraw> {
    let period = scenario.symbol_period();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pilots = scenario.constellation.sample(&mut rng, scenario.pilot_len);
    let data = scenario.constellation.sample(&mut rng, scenario.data_len);
    let tau = match scenario.offset {
        OffsetModel::Fixed { value } => value * period,
        OffsetModel::Uniform { half_width } if half_width > 0.0 => {
            rng.random_range(-half_width..half_width) * period
        }
        OffsetModel::Uniform { .. } => 0.0,
    };
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);
    let frame = Frame::new(&scenario.constellation, pilots, data, period, scenario.pulse.memory())?;
    Ok(TrialDraw { frame, tau, noise_seed: noise_rng.next_u64() })
}

/// Synthesis, encoding, timing recovery and detection for one seeded frame.
///
/// Deterministic in `(scenario, seed)`. Module errors become failure flags.
pub fn run_trial(scenario: &Scenario, seed: u64) -> TrialResult {
    let draw = match draw_trial(scenario, seed) {
        Ok(d) => d,
        Err(e) => return failed(seed, 0.0, Vec::new(), &e),
    };
    let mut result = TrialResult {
        seed,
        tau_true: draw.tau,
        tau_hat: None,
        timing_sq_error: None,
        data: draw.frame.data.clone(),
        detectors: Vec::new(),
        firings: 0,
        pilot_firings: 0,
        data_intervals: 0,
        failure: None,
        failure_message: None,
    };
    if let Err(e) = run_pipeline(scenario, &draw, &mut result) {
        result.failure = Some(FailureKind::from(&e));
        result.failure_message = Some(e.to_string());
    }
    result
}

fn failed(seed: u64, tau: f64, data: Vec<f64>, e: &Error) -> TrialResult {
    TrialResult {
        seed,
        tau_true: tau,
        tau_hat: None,
        timing_sq_error: None,
        data,
        detectors: Vec::new(),
        firings: 0,
        pilot_firings: 0,
        data_intervals: 0,
        failure: Some(FailureKind::from(e)),
        failure_message: Some(e.to_string()),
    }
}

fn run_pipeline(scenario: &Scenario, draw: &TrialDraw, result: &mut TrialResult) -> Result<()> {
    let period = scenario.symbol_period();
    let frame = &draw.frame;
    let signal = TxSignal::new(frame.clone(), scenario.pulse.clone(), draw.tau)?;
    let noise = NoiseModel::awgn(scenario.psd, draw.noise_seed)?;
    let record = encode(&signal, &scenario.params, &noise, scenario.window())?;
    result.firings = record.len();

    let split = split_firing_times(
        record.times(),
        period,
        scenario.pilot_len,
        scenario.effective_pilot_len,
        scenario.data_len,
    )?;
    result.pilot_firings = split.pilot.len();
    result.data_intervals = split.data.len() - 1;

    let timing = estimate_tau_ml(
        &split.pilot,
        &frame.pilots,
        &scenario.pulse,
        &scenario.params,
        &scenario.estimator,
    )?;
    let tau_hat = timing.tau_hat;

    let needs_system = scenario.runs(DetectorKind::Zf) || scenario.runs(DetectorKind::MlBruteforce);
    let mut estimates: Vec<SymbolEstimate> = Vec::new();
    if needs_system {
        let system = build_detection_system(
            &split.data,
            &frame.pilots,
            tau_hat,
            &scenario.pulse,
            &scenario.params,
            scenario.data_len,
        )?;
        if scenario.runs(DetectorKind::Zf) {
            estimates.push(detect_zf(&system, &scenario.constellation)?);
        }
        if scenario.runs(DetectorKind::MlBruteforce) {
            let decided = brute_force_ml(&system, &scenario.constellation)?;
            estimates.push(SymbolEstimate {
                pre_estimate: decided.clone(),
                decided,
                method: DetectorKind::MlBruteforce,
            });
        }
    }
    if let Some(calibration) = &scenario.calibration {
        let calibration = calibration.as_ref().map_err(Clone::clone)?;
        estimates.push(spike_count_detect(
            record.times(),
            tau_hat,
            &scenario.constellation,
            period,
            scenario.pilot_len,
            scenario.data_len,
            calibration,
        ));
    }

    result.tau_hat = Some(tau_hat);
    result.timing_sq_error = Some(((tau_hat - draw.tau) / period).powi(2));
    result.detectors = estimates
        .into_iter()
        .map(|est| {
            let errors = est.decided.iter().zip(&frame.data).filter(|(a, b)| a != b).count();
            DetectorOutcome {
                detector: est.method,
                symbol_errors: errors,
                ser: errors as f64 / frame.data.len() as f64,
                decided: est.decided,
            }
        })
        .collect();
    Ok(())
}
