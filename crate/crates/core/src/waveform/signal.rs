use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::{Constellation, PulseShape};
use crate::error::{Error, Result};

/// `L_p - L_f`: the number of leading pilot periods free of data ISI.
pub fn effective_pilot_length(pilot_len: usize, memory: usize) -> Result<usize> {
    if pilot_len <= memory {
        return Err(Error::InvalidArgument(format!(
            "pilot length {pilot_len} must exceed pulse memory {memory}"
        )));
    }
    Ok(pilot_len - memory)
}

/// Pilot symbols followed by data symbols on a grid of period `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub pilots: Vec<f64>,
    pub data: Vec<f64>,
    pub symbol_period: f64,
}

impl Frame {
    pub fn new(
        constellation: &Constellation,
        pilots: Vec<f64>,
        data: Vec<f64>,
        symbol_period: f64,
        memory: usize,
    ) -> Result<Self> {
        effective_pilot_length(pilots.len(), memory)?;
        if let Some(bad) = pilots.iter().chain(&data).find(|s| !constellation.contains(**s)) {
            return Err(Error::InvalidArgument(format!(
                "symbol {bad} is not a constellation point"
            )));
        }
        if !(symbol_period > 0.0) {
            return Err(Error::InvalidArgument("symbol period must be positive".into()));
        }
        Ok(Self { pilots, data, symbol_period })
    }

    pub fn pilot_len(&self) -> usize {
        self.pilots.len()
    }

    pub fn data_len(&self) -> usize {
        self.data.len()
    }
}

/// `r(t) = Σ_j s_j p(t - jT - τ)` over pilots then data.
#[derive(Debug, Clone)]
pub struct TxSignal {
    frame: Frame,
    pulse: PulseShape,
    tau: f64,
    symbols: Vec<f64>,
    // prefix[j] = s_0 + ... + s_{j-1}
    prefix: Vec<f64>,
}

impl TxSignal {
    pub fn new(frame: Frame, pulse: PulseShape, tau: f64) -> Result<Self> {
        let period = frame.symbol_period;
        if (pulse.symbol_period() - period).abs() > 1e-12 * period {
            return Err(Error::InvalidArgument(format!(
                "pulse period {} differs from frame period {period}",
                pulse.symbol_period()
            )));
        }
        if !(tau.abs() <= 0.5 * period) {
            return Err(Error::InvalidArgument(format!(
                "timing offset {tau} outside [-T/2, T/2]"
            )));
        }
        Ok(Self::assemble(frame, pulse, tau))
    }

    /// Signal from raw symbols without frame validation (calibration helpers).
    pub(crate) fn from_symbols(symbols: Vec<f64>, pulse: PulseShape, tau: f64) -> Self {
        let frame = Frame { pilots: symbols, data: Vec::new(), symbol_period: pulse.symbol_period() };
        Self::assemble(frame, pulse, tau)
    }

    fn assemble(frame: Frame, pulse: PulseShape, tau: f64) -> Self {
        let symbols: Vec<f64> = frame.pilots.iter().chain(&frame.data).copied().collect();
        let mut prefix = Vec::with_capacity(symbols.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for s in &symbols {
            acc += s;
            prefix.push(acc);
        }
        Self { frame, pulse, tau, symbols, prefix }
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn pulse(&self) -> &PulseShape {
        &self.pulse
    }

    pub fn timing_offset(&self) -> f64 {
        self.tau
    }

    /// Pilots then data.
    pub fn symbols(&self) -> &[f64] {
        &self.symbols
    }

    pub fn center(&self, j: usize) -> f64 {
        j as f64 * self.frame.symbol_period + self.tau
    }

    /// Indices of symbols whose pulse support may intersect `[a, b]` (conservative).
    fn active(&self, a: f64, b: f64) -> Option<RangeInclusive<usize>> {
        let n = self.symbols.len();
        if n == 0 {
            return None;
        }
        let period = self.frame.symbol_period;
        let (lo, hi) = self.pulse.support();
        let first = ((a - self.tau - hi) / period).floor();
        let last = ((b - self.tau - lo) / period).ceil();
        if last < 0.0 || first > (n - 1) as f64 {
            return None;
        }
        let first = first.max(0.0) as usize;
        let last = (last as usize).min(n - 1);
        Some(first..=last)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.active(t, t).map_or(0.0, |range| {
            range
                .map(|j| self.symbols[j] * self.pulse.eval(t - self.center(j)))
                .sum()
        })
    }

    /// `∫_{-∞}^{t} r(u) du`.
    pub fn cumulative(&self, t: f64) -> f64 {
        let Some(range) = self.active(t, t) else {
            return if t > self.center(0) { self.prefix[self.symbols.len()] * self.pulse.area() } else { 0.0 };
        };
        let (first, last) = range.into_inner();
        let passed = self.prefix[first] * self.pulse.area();
        passed
            + (first..=last)
                .map(|j| self.symbols[j] * self.pulse.cumulative(t - self.center(j)))
                .sum::<f64>()
    }

    /// `∫_a^b r(t) dt`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.cumulative(b) - self.cumulative(a)
    }

    /// Support edges and kinks of every pulse inside `(a, b)`.
    pub fn breakpoints_in(&self, a: f64, b: f64) -> Vec<f64> {
        let Some(range) = self.active(a, b) else {
            return Vec::new();
        };
        let kinks = self.pulse.breakpoints();
        range
            .flat_map(|j| {
                let c = self.center(j);
                kinks.iter().map(move |k| c + k)
            })
            .filter(|&x| x > a && x < b)
            .collect()
    }

    /// `max |r(t)|` over a uniform grid on `[start, end]`.
    pub fn peak_abs_on_grid(&self, start: f64, end: f64, step: f64) -> f64 {
        let n = ((end - start) / step).ceil().max(0.0) as usize;
        (0..=n)
            .map(|i| self.eval((start + i as f64 * step).min(end)).abs())
            .fold(0.0, f64::max)
    }

    /// Interval outside which `r` vanishes.
    pub fn support(&self) -> (f64, f64) {
        let (lo, hi) = self.pulse.support();
        let n = self.symbols.len().max(1);
        (self.center(0) + lo, self.center(n - 1) + hi)
    }
}
