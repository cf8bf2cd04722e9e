//! Observation vector and design matrices of the firing-time likelihood.
//!
//! For firing times `t_0 < … < t_K` and a timing hypothesis `τ`:
//!
//! * `y_k = κΔ - b (t_k - t_{k-1})`
//! * `P_{k,l} = ∫_{t_{k-1}}^{t_k} p(t - lT - τ) dt` for the pilots
//! * `G_{k,l} = ∫_{t_{k-1}}^{t_k} p(t - (L_p + l)T - τ) dt` for the data
//! * `T = diag(1 / (t_k - t_{k-1}))`
//!
//! and the log-likelihood is `-‖T^{1/2}(y - P s_p - G s_d)‖²` up to a constant
//! that depends on the firing times only. The noise PSD only rescales the norm,
//! so every argmax taken over it is independent of `σ²`; it is evaluated here
//! with unit PSD.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tem::TemParams;
use crate::waveform::PulseShape;

/// `∫_a^b p(t - shift) dt`.
pub fn integrated_pulse(pulse: &PulseShape, a: f64, b: f64, shift: f64) -> Result<f64> {
    if !(a < b) {
        return Err(Error::InvalidInterval { start: a, end: b });
    }
    Ok(pulse.integral_unchecked(a, b, shift))
}

/// `d/dshift ∫_a^b p(t - shift) dt = p(a - shift) - p(b - shift)`.
pub fn integrated_pulse_dshift(pulse: &PulseShape, a: f64, b: f64, shift: f64) -> Result<f64> {
    if !(a < b) {
        return Err(Error::InvalidInterval { start: a, end: b });
    }
    Ok(pulse.eval(a - shift) - pulse.eval(b - shift))
}

pub(crate) fn validate_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::InvalidFiringRecord(format!(
            "need at least 2 firing times, got {}",
            times.len()
        )));
    }
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidFiringRecord("times are not strictly increasing".into()));
    }
    Ok(())
}

/// `κΔ - b (b_t - a_t)` for one inter-spike interval.
#[inline]
pub(crate) fn observation(params: &TemParams, a: f64, b: f64) -> f64 {
    params.threshold() - params.bias * (b - a)
}

/// Symbols `first..first + count` whose shifted support may meet `[a, b]`.
#[inline]
fn active_symbols(pulse: &PulseShape, count: usize, first: usize, a: f64, b: f64, tau: f64) -> std::ops::Range<usize> {
    if count == 0 {
        return 0..0;
    }
    let period = pulse.symbol_period();
    let (lo, hi) = pulse.support();
    let base = first as f64 * period + tau;
    let start = ((a - base - hi) / period).floor().max(0.0);
    let end = ((b - base - lo) / period).ceil() + 1.0;
    let start = (start as usize).min(count);
    let end = (end.max(0.0) as usize).min(count);
    start..end.max(start)
}

/// `Σ_l s_l ∫_a^b p(t - (first + l)T - τ) dt`.
pub(crate) fn model_sum(pulse: &PulseShape, symbols: &[f64], first: usize, a: f64, b: f64, tau: f64) -> f64 {
    let period = pulse.symbol_period();
    active_symbols(pulse, symbols.len(), first, a, b, tau)
        .map(|l| symbols[l] * pulse.integral_unchecked(a, b, (first + l) as f64 * period + tau))
        .sum()
}

/// `∂/∂τ` of [`model_sum`].
pub(crate) fn model_sum_dtau(pulse: &PulseShape, symbols: &[f64], first: usize, a: f64, b: f64, tau: f64) -> f64 {
    let period = pulse.symbol_period();
    active_symbols(pulse, symbols.len(), first, a, b, tau)
        .map(|l| {
            let shift = (first + l) as f64 * period + tau;
            symbols[l] * (pulse.eval(a - shift) - pulse.eval(b - shift))
        })
        .sum()
}

/// `(y, P, G, diag T)` for one timing hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodMatrices {
    pub y: DVector<f64>,
    pub pilot: DMatrix<f64>,
    pub data: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub tau: f64,
}

impl LikelihoodMatrices {
    /// `y - P s_p - G s_d`.
    pub fn residual(&self, pilots: &[f64], data: &[f64]) -> Result<DVector<f64>> {
        if pilots.len() != self.pilot.ncols() || data.len() != self.data.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} pilots and {} data symbols, got {} and {}",
                self.pilot.ncols(),
                self.data.ncols(),
                pilots.len(),
                data.len()
            )));
        }
        let sp = DVector::from_column_slice(pilots);
        let sd = DVector::from_column_slice(data);
        Ok(&self.y - &self.pilot * sp - &self.data * sd)
    }

    /// Same matrices with every weight multiplied by `c`.
    pub fn with_scaled_weights(&self, c: f64) -> Self {
        Self { weights: &self.weights * c, ..self.clone() }
    }
}

pub fn build_matrices(
    times: &[f64],
    pilot_len: usize,
    data_len: usize,
    tau: f64,
    pulse: &PulseShape,
    params: &TemParams,
) -> Result<LikelihoodMatrices> {
    validate_times(times)?;
    let k = times.len() - 1;
    let period = pulse.symbol_period();
    let mut y = DVector::zeros(k);
    let mut weights = DVector::zeros(k);
    let mut pilot = DMatrix::zeros(k, pilot_len);
    let mut data = DMatrix::zeros(k, data_len);
    for (row, w) in times.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        y[row] = observation(params, a, b);
        weights[row] = 1.0 / (b - a);
        for l in 0..pilot_len {
            pilot[(row, l)] = pulse.integral_unchecked(a, b, l as f64 * period + tau);
        }
        for l in 0..data_len {
            data[(row, l)] = pulse.integral_unchecked(a, b, (pilot_len + l) as f64 * period + tau);
        }
    }
    Ok(LikelihoodMatrices { y, pilot, data, weights, tau })
}

/// `-‖T^{1/2}(y - P s_p - G s_d)‖²`.
pub fn log_likelihood(matrices: &LikelihoodMatrices, pilots: &[f64], data: &[f64]) -> Result<f64> {
    let r = matrices.residual(pilots, data)?;
    Ok(-r.iter().zip(matrices.weights.iter()).map(|(e, w)| w * e * e).sum::<f64>())
}
