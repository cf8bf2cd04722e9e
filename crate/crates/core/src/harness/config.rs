//! Experiment configuration: a single JSON document with a versioned schema.
//!
//! Missing optional fields take their defaults; `schema_version` is required.
//! Lengths inside `timing` are in units of the symbol period, all other times
//! are in seconds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::{DetectorKind, SpikeCountCalibration, BRUTE_FORCE_LIMIT};
use crate::error::{Error, Result};
use crate::tem::TemParams;
use crate::timing::NewtonConfig;
use crate::waveform::{effective_pilot_length, Constellation, PulseKind, PulseShape};

pub const SCHEMA_VERSION: u32 = 1;

/// Integrator phases averaged when calibrating the spike-count table.
pub const CALIBRATION_PHASES: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub constellation: ConstellationConfig,
    #[serde(default)]
    pub pulse: PulseConfig,
    #[serde(default)]
    pub frame: FrameConfig,
    pub tem: TemConfig,
    #[serde(default)]
    pub noise: NoiseSweep,
    #[serde(default)]
    pub timing: OffsetModel,
    #[serde(default)]
    pub estimator: NewtonConfig,
    #[serde(default = "default_detectors")]
    pub detectors: Vec<DetectorKind>,
    #[serde(default)]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub sweep: SweepValues,
}

fn default_detectors() -> Vec<DetectorKind> {
    vec![DetectorKind::Zf, DetectorKind::SpikeCount]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstellationConfig {
    pub order: usize,
    pub energy: f64,
}

impl Default for ConstellationConfig {
    fn default() -> Self {
        Self { order: 4, energy: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseConfig {
    #[serde(flatten)]
    pub kind: PulseKind,
    pub memory: usize,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self { kind: PulseKind::RootRaisedCosine { rolloff: 0.5 }, memory: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    pub pilot_len: usize,
    pub data_len: usize,
    pub symbol_period: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self { pilot_len: 12, data_len: 16, symbol_period: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemConfig {
    pub kappa: f64,
    #[serde(default = "one")]
    pub delta: f64,
    pub bias: f64,
    /// Defaults to `T/1000`.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Defaults to `1e-12 T`.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

fn one() -> f64 {
    1.0
}

/// Noise levels visited by an SNR sweep. Other axes use the first level.
///
/// SNR is `E_s / σ²` with `E_s` the average symbol energy `E[s²] ∫p²` and `σ²`
/// the two-sided PSD of the white noise added before the integrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSweep {
    #[default]
    None,
    Psd { values: Vec<f64> },
    SnrDb { values: Vec<f64> },
}

/// How the true timing offset is chosen per trial, in units of `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum OffsetModel {
    Fixed { value: f64 },
    Uniform { half_width: f64 },
}

impl Default for OffsetModel {
    fn default() -> Self {
        OffsetModel::Uniform { half_width: 0.5 }
    }
}

/// Values for the non-noise sweep axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepValues {
    #[serde(default)]
    pub effective_pilot_lengths: Vec<usize>,
    #[serde(default)]
    pub n_guess: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Snr,
    PilotLength,
    NGuess,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr" => Ok(Axis::Snr),
            "pilot" | "pilot_length" => Ok(Axis::PilotLength),
            "n_guess" | "n-guess" => Ok(Axis::NGuess),
            other => Err(Error::InvalidArgument(format!("unknown sweep axis {other:?}"))),
        }
    }
}

/// One fully resolved sweep point.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub constellation: Constellation,
    pub pulse: PulseShape,
    pub params: TemParams,
    pub pilot_len: usize,
    pub effective_pilot_len: usize,
    pub data_len: usize,
    pub psd: f64,
    pub offset: OffsetModel,
    pub estimator: NewtonConfig,
    pub detectors: Vec<DetectorKind>,
    /// Built once per point; a failed build fails every trial that needs it.
    pub calibration: Option<Result<SpikeCountCalibration>>,
}

impl Scenario {
    pub fn symbol_period(&self) -> f64 {
        self.pulse.symbol_period()
    }

    pub fn runs(&self, kind: DetectorKind) -> bool {
        self.detectors.contains(&kind)
    }

    /// Encoder window `[-T/2, (L_p + L_d + 1/2) T)`.
    pub fn window(&self) -> (f64, f64) {
        let period = self.symbol_period();
        (-0.5 * period, ((self.pilot_len + self.data_len) as f64 + 0.5) * period)
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(Error::Parse(format!("unsupported schema_version {v}"))),
            None => return Err(Error::Parse("missing schema_version".into())),
        }
        let config: Self = serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn constellation(&self) -> Result<Constellation> {
        Constellation::pam(self.constellation.order, self.constellation.energy)
    }

    pub fn pulse(&self) -> Result<PulseShape> {
        PulseShape::new(self.pulse.kind, self.frame.symbol_period, self.pulse.memory)
    }

    pub fn tem_params(&self) -> Result<TemParams> {
        let period = self.frame.symbol_period;
        let mut params = TemParams::new(self.tem.kappa, self.tem.delta, self.tem.bias, period)?;
        if let Some(dt) = self.tem.dt {
            params.dt = dt;
        }
        if let Some(tol) = self.tem.tolerance {
            params.tolerance = tol;
        }
        params.validate()?;
        Ok(params)
    }

    /// Checks everything that does not depend on the sweep point.
    pub fn validate(&self) -> Result<()> {
        self.constellation()?;
        self.pulse()?;
        self.tem_params()?;
        self.estimator.validate()?;
        effective_pilot_length(self.frame.pilot_len, self.pulse.memory)?;
        if self.frame.data_len == 0 {
            return Err(Error::InvalidArgument("data_len must be positive".into()));
        }
        let levels = match &self.noise {
            NoiseSweep::None => &[][..],
            NoiseSweep::Psd { values } | NoiseSweep::SnrDb { values } => values.as_slice(),
        };
        if let NoiseSweep::Psd { values } = &self.noise {
            if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidArgument("noise PSD values must be finite and >= 0".into()));
            }
        }
        if levels.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("noise levels must not be NaN".into()));
        }
        match self.timing {
            OffsetModel::Fixed { value } if !(value.abs() <= 0.5) => {
                return Err(Error::InvalidArgument(format!("fixed offset {value} outside [-0.5, 0.5]")));
            }
            OffsetModel::Uniform { half_width } if !(0.0..=0.5).contains(&half_width) => {
                return Err(Error::InvalidArgument(format!("half_width {half_width} outside [0, 0.5]")));
            }
            _ => {}
        }
        if self.detectors.contains(&DetectorKind::MlBruteforce) {
            let size = (self.constellation.order as f64).powi(self.frame.data_len as i32);
            if size > BRUTE_FORCE_LIMIT {
                return Err(Error::SearchSpaceTooLarge { size, limit: BRUTE_FORCE_LIMIT });
            }
        }
        for &lp in &self.sweep.effective_pilot_lengths {
            if lp == 0 {
                return Err(Error::InvalidArgument("effective pilot lengths must be positive".into()));
            }
        }
        for &n in &self.sweep.n_guess {
            NewtonConfig { n_guess: n, ..self.estimator }.validate()?;
        }
        Ok(())
    }

    /// Average symbol energy `E[s²] ∫p²`.
    pub fn symbol_energy(&self) -> Result<f64> {
        Ok(self.constellation()?.average_energy() * self.pulse()?.energy())
    }

    fn psd_levels(&self) -> Result<Vec<(f64, f64)>> {
        Ok(match &self.noise {
            NoiseSweep::None => vec![(0.0, 0.0)],
            NoiseSweep::Psd { values } => values.iter().map(|&v| (v, v)).collect(),
            NoiseSweep::SnrDb { values } => {
                let energy = self.symbol_energy()?;
                values.iter().map(|&db| (db, energy / 10f64.powf(db / 10.0))).collect()
            }
        })
    }

    /// `(sweep_value, scenario)` for every point of `axis`.
    pub fn sweep_points(&self, axis: Axis) -> Result<Vec<(f64, Scenario)>> {
        let levels = self.psd_levels()?;
        let first_psd = levels.first().map_or(0.0, |l| l.1);
        let base_lp = self.frame.pilot_len;
        match axis {
            Axis::Snr => {
                if matches!(self.noise, NoiseSweep::None) {
                    return Err(Error::InvalidArgument("an snr sweep needs noise levels".into()));
                }
                levels
                    .iter()
                    .map(|&(value, psd)| Ok((value, self.scenario(base_lp, psd, self.estimator)?)))
                    .collect()
            }
            Axis::PilotLength => {
                if self.sweep.effective_pilot_lengths.is_empty() {
                    return Err(Error::InvalidArgument("sweep.effective_pilot_lengths is empty".into()));
                }
                self.sweep
                    .effective_pilot_lengths
                    .iter()
                    .map(|&lp| {
                        let scenario = self.scenario(lp + self.pulse.memory, first_psd, self.estimator)?;
                        Ok((lp as f64, scenario))
                    })
                    .collect()
            }
            Axis::NGuess => {
                if self.sweep.n_guess.is_empty() {
                    return Err(Error::InvalidArgument("sweep.n_guess is empty".into()));
                }
                self.sweep
                    .n_guess
                    .iter()
                    .map(|&n| {
                        let estimator = NewtonConfig { n_guess: n, ..self.estimator };
                        Ok((n as f64, self.scenario(base_lp, first_psd, estimator)?))
                    })
                    .collect()
            }
        }
    }

    /// The scenario at the first noise level and the configured frame.
    pub fn base_scenario(&self) -> Result<Scenario> {
        let psd = self.psd_levels()?.first().map_or(0.0, |l| l.1);
        self.scenario(self.frame.pilot_len, psd, self.estimator)
    }

    fn scenario(&self, pilot_len: usize, psd: f64, estimator: NewtonConfig) -> Result<Scenario> {
        let constellation = self.constellation()?;
        let pulse = self.pulse()?;
        let params = self.tem_params()?;
        estimator.validate()?;
        let effective_pilot_len = effective_pilot_length(pilot_len, pulse.memory())?;
        let calibration = if self.detectors.contains(&DetectorKind::SpikeCount) {
            Some(SpikeCountCalibration::build(&constellation, &pulse, &params, CALIBRATION_PHASES))
        } else {
            None
        };
        Ok(Scenario {
            constellation,
            pulse,
            params,
            pilot_len,
            effective_pilot_len,
            data_len: self.frame.data_len,
            psd,
            offset: self.timing,
            estimator,
            detectors: self.detectors.clone(),
            calibration,
        })
    }
}
