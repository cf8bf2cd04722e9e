//! Integrate-and-fire time encoding.
//!
//! The integrator accumulates `b + r(t)` plus integrated white noise from zero at
//! the window start. Each time the accumulated value reaches the threshold `κΔ`
//! a firing time is emitted and the integrator resets to exactly zero.
//!
//! Noise is realised as a random walk on the `dt` grid, with an independent
//! `N(0, σ² dt)` increment per step, linearly interpolated inside a step. The
//! noise integrated over any interval therefore has variance `σ²` times its length
//! (up to the partial steps at its ends).

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::waveform::TxSignal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemParams {
    pub kappa: f64,
    pub delta: f64,
    pub bias: f64,
    /// Integration step in seconds.
    pub dt: f64,
    /// Firing-time resolution in seconds.
    pub tolerance: f64,
}

impl TemParams {
    /// Parameters with `dt = T/1000` and `tolerance = 1e-12 T`.
    pub fn new(kappa: f64, delta: f64, bias: f64, symbol_period: f64) -> Result<Self> {
        let params = Self {
            kappa,
            delta,
            bias,
            dt: symbol_period / 1000.0,
            tolerance: 1e-12 * symbol_period,
        };
        params.validate()?;
        Ok(params)
    }

    /// `κ · Δ`.
    pub fn threshold(&self) -> f64 {
        self.kappa * self.delta
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive("threshold kappa*delta", self.threshold())?;
        positive("bias", self.bias)?;
        positive("dt", self.dt)?;
        positive("tolerance", self.tolerance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    AdditiveWhiteGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Two-sided power spectral density `σ²`.
    pub psd: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self { kind: NoiseKind::None, psd: 0.0, seed: 0 }
    }

    pub fn awgn(psd: f64, seed: u64) -> Result<Self> {
        if !(psd >= 0.0 && psd.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise PSD must be >= 0, got {psd}")));
        }
        Ok(Self { kind: NoiseKind::AdditiveWhiteGaussian, psd, seed })
    }

    fn sigma(&self) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::AdditiveWhiteGaussian => self.psd.sqrt(),
        }
    }
}

/// Strictly increasing firing times observed in `[window.0, window.1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiringRecord {
    times: Vec<f64>,
    window: (f64, f64),
    params: TemParams,
}

impl FiringRecord {
    pub fn new(times: Vec<f64>, window: (f64, f64), params: TemParams) -> Result<Self> {
        if !(window.0 < window.1) {
            return Err(Error::EmptyWindow);
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidFiringRecord("times are not strictly increasing".into()));
        }
        if let Some(t) = times.iter().find(|&&t| !(t >= window.0 && t < window.1)) {
            return Err(Error::InvalidFiringRecord(format!(
                "time {t} outside window [{}, {})",
                window.0, window.1
            )));
        }
        Ok(Self { times, window, params })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn params(&self) -> &TemParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Header `# window <start> <end> <kappa_delta> <b>` followed by one time per
    /// line, all with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(32 * (self.times.len() + 1));
        let _ = writeln!(
            out,
            "# window {:.16e} {:.16e} {:.16e} {:.16e}",
            self.window.0,
            self.window.1,
            self.params.threshold(),
            self.params.bias
        );
        for t in &self.times {
            let _ = writeln!(out, "{t:.16e}");
        }
        out
    }

    /// Parses [`FiringRecord::to_text`] output. The threshold is restored as
    /// `κ = κΔ, Δ = 1`; `dt` and `tolerance` take their unit-period defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty firing record".into()))?;
        let fields = header
            .strip_prefix("# window")
            .ok_or_else(|| Error::Parse(format!("bad header line: {header}")))?;
        let values: Vec<f64> = fields
            .split_whitespace()
            .map(parse_f64)
            .collect::<Result<_>>()?;
        let [start, end, threshold, bias] = values[..] else {
            return Err(Error::Parse(format!("header needs 4 values, got {}", values.len())));
        };
        let times = lines.map(parse_f64).collect::<Result<Vec<_>>>()?;
        let params = TemParams { kappa: threshold, delta: 1.0, bias, dt: 1e-3, tolerance: 1e-12 };
        params.validate()?;
        Self::new(times, (start, end), params)
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")))
}

/// Runs the integrate-and-fire encoder over `window`.
pub fn encode(
    signal: &TxSignal,
    params: &TemParams,
    noise: &NoiseModel,
    window: (f64, f64),
) -> Result<FiringRecord> {
    params.validate()?;
    let (start, end) = window;
    if !(start < end) {
        return Err(Error::EmptyWindow);
    }
    let period = signal.frame().symbol_period;
    let peak = signal.peak_abs_on_grid(start, end, period / 128.0);
    if params.bias <= peak {
        return Err(Error::BiasTooSmall { bias: params.bias, peak });
    }

    let theta = params.threshold();
    let bias = params.bias;
    let sigma = noise.sigma();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);

    let mut times = Vec::new();
    // state at the last reset
    let mut t_prev = start;
    let mut r_prev = signal.cumulative(start);
    let mut w_prev = 0.0;
    // noise walk at the left grid point of the current step
    let mut walk = 0.0;

    let mut step = 0u64;
    loop {
        let g0 = start + step as f64 * params.dt;
        if g0 >= end {
            break;
        }
        let g1 = (start + (step + 1) as f64 * params.dt).min(end);
        let increment = if sigma > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * (g1 - g0).sqrt() * z
        } else {
            0.0
        };
        let walk_at = |t: f64| walk + increment * (t - g0) / (g1 - g0);
        let level = |t: f64, t_prev: f64, r_prev: f64, w_prev: f64| {
            bias * (t - t_prev) + (signal.cumulative(t) - r_prev) + (walk_at(t) - w_prev)
        };

        let mut lo = g0.max(t_prev);
        while level(g1, t_prev, r_prev, w_prev) >= theta {
            let (mut a, mut c) = (lo, g1);
            while c - a > params.tolerance {
                let m = 0.5 * (a + c);
                if m <= a || m >= c {
                    break;
                }
                if level(m, t_prev, r_prev, w_prev) >= theta {
                    c = m;
                } else {
                    a = m;
                }
            }
            let fire = 0.5 * (a + c);
            if fire >= end - params.tolerance {
                break;
            }
            times.push(fire);
            t_prev = fire;
            r_prev = signal.cumulative(fire);
            w_prev = walk_at(fire);
            lo = fire;
        }
        walk += increment;
        step += 1;
    }
    FiringRecord::new(times, window, *params)
}

/// Pilot and data firing vectors used by the timing and detection stages.
#[derive(Debug, Clone, PartialEq)]
pub struct FiringSplit {
    /// Firings in `[-T/2, (L̃_p - 1/2) T)`.
    pub pilot: Vec<f64>,
    /// The last firing before `(L_p - 1/2) T`, then every firing in
    /// `[(L_p - 1/2) T, (L_p + L_d - 1/2) T)`.
    pub data: Vec<f64>,
}

pub fn split_firing_times(
    times: &[f64],
    symbol_period: f64,
    pilot_len: usize,
    effective_pilot_len: usize,
    data_len: usize,
) -> Result<FiringSplit> {
    let period = symbol_period;
    let pilot_end = (effective_pilot_len as f64 - 0.5) * period;
    let data_start = (pilot_len as f64 - 0.5) * period;
    let data_end = ((pilot_len + data_len) as f64 - 0.5) * period;

    let pilot: Vec<f64> = times
        .iter()
        .copied()
        .filter(|&t| t >= -0.5 * period && t < pilot_end)
        .collect();
    if pilot.len() < 2 {
        return Err(Error::InsufficientPilotSpikes { found: pilot.len() });
    }
    let anchor = *times[..times.partition_point(|&t| t < data_start)]
        .last()
        .ok_or(Error::InsufficientDataAnchor)?;
    let data = std::iter::once(anchor)
        .chain(times.iter().copied().filter(|&t| t >= data_start && t < data_end))
        .collect();
    Ok(FiringSplit { pilot, data })
}

/// `κΔ - ∫_{t_{k-1}}^{t_k} (b + r(t)) dt` for every consecutive pair, with the
/// integral taken by adaptive quadrature directly on `r`.
pub fn t_transform_residuals(record: &FiringRecord, signal: &TxSignal, params: &TemParams) -> Vec<f64> {
    let theta = params.threshold();
    record
        .times()
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let breaks = signal.breakpoints_in(a, b);
            let area = quad::integrate_with_breaks(|t| signal.eval(t), a, b, &breaks, 1e-14);
            theta - params.bias * (b - a) - area
        })
        .collect()
}
