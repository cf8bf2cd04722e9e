//! Maximum-likelihood symbol timing recovery from pilot firing times.
//!
//! The offset estimate minimises
//!
//! ```text
//! J(τ) = Σ_k (ỹ_k - Σ_l s_l P̃_{k,l}(τ))² / (2 (t_k - t_{k-1}))
//! ```
//!
//! over `τ ∈ [-T/2, T/2]`, using only the firing times inside the first `L̃_p`
//! pilot periods. `J` is not convex in `τ`, so Newton's method is run on
//! `J'(τ) = 0` from `N_guess` evenly spaced starts and the stationary point with
//! the smallest objective wins. The denominator of the first-order condition is
//! taken to be the same inter-spike interval `t_k - t_{k-1}` that weights `J`.
//!
//! `J''` is a central difference of the analytic `J'`, so pulses only need to be
//! once differentiable (the rectangular pulse works too).
//!
//! With the rectangular pulse (`L_f = 0`) and `τ < 0` the first data pulse starts
//! inside the last pilot period, so a small unknown term enters the last few
//! timing intervals. The window is kept as is; give such links a spare pilot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{model_sum, model_sum_dtau, observation, validate_times};
use crate::tem::TemParams;
use crate::waveform::PulseShape;

/// Objectives closer than this are treated as equal; the smaller `|τ|` wins.
pub const OBJECTIVE_TIE: f64 = 1e-12;

const GOLDEN_ITERATIONS: usize = 40;

/// Multi-start Newton settings. Lengths are in units of the symbol period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    pub n_guess: usize,
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub damping: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { n_guess: 8, max_iterations: 50, step_tolerance: 1e-10, damping: 1.0 }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_guess < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_guess must be at least 2, got {}",
                self.n_guess
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be positive".into()));
        }
        if !(self.step_tolerance > 0.0) {
            return Err(Error::InvalidArgument("step_tolerance must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        Ok(())
    }

    /// `ℓ`-th initial guess in seconds: `(-1/2 + ℓ / (N_guess - 1)) T`.
    pub fn initial_guess(&self, index: usize, symbol_period: f64) -> f64 {
        (-0.5 + index as f64 / (self.n_guess - 1) as f64) * symbol_period
    }
}

/// Result of one Newton start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Candidate {
    pub start: f64,
    pub tau: f64,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingEstimate {
    pub tau_hat: f64,
    pub objective: f64,
    /// Whether the selected candidate came from a converged Newton run.
    pub converged: bool,
    pub starts_converged: usize,
    pub iterations_total: usize,
    pub candidates: Vec<Candidate>,
}

/// The pilot-only timing objective with its per-interval data precomputed.
#[derive(Debug, Clone)]
pub struct TimingProblem<'a> {
    times: &'a [f64],
    pilots: &'a [f64],
    pulse: &'a PulseShape,
    observations: Vec<f64>,
    intervals: Vec<f64>,
}

impl<'a> TimingProblem<'a> {
    pub fn new(
        times: &'a [f64],
        pilots: &'a [f64],
        pulse: &'a PulseShape,
        params: &TemParams,
    ) -> Result<Self> {
        validate_times(times)?;
        let observations = times.windows(2).map(|w| observation(params, w[0], w[1])).collect();
        let intervals = times.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self { times, pilots, pulse, observations, intervals })
    }

    fn error(&self, k: usize, tau: f64) -> f64 {
        let (a, b) = (self.times[k], self.times[k + 1]);
        self.observations[k] - model_sum(self.pulse, self.pilots, 0, a, b, tau)
    }

    pub fn objective(&self, tau: f64) -> f64 {
        (0..self.intervals.len())
            .map(|k| {
                let e = self.error(k, tau);
                e * e / (2.0 * self.intervals[k])
            })
            .sum()
    }

    /// `dJ/dτ`; the log-likelihood derivative is its negative.
    pub fn derivative(&self, tau: f64) -> f64 {
        (0..self.intervals.len())
            .map(|k| {
                let (a, b) = (self.times[k], self.times[k + 1]);
                let e = self.error(k, tau);
                -e * model_sum_dtau(self.pulse, self.pilots, 0, a, b, tau) / self.intervals[k]
            })
            .sum()
    }

    fn second_derivative(&self, tau: f64) -> f64 {
        let h = 1e-6 * self.pulse.symbol_period();
        (self.derivative(tau + h) - self.derivative(tau - h)) / (2.0 * h)
    }
}

pub fn timing_objective(
    tau: f64,
    pilot_times: &[f64],
    pilots: &[f64],
    pulse: &PulseShape,
    params: &TemParams,
) -> Result<f64> {
    Ok(TimingProblem::new(pilot_times, pilots, pulse, params)?.objective(tau))
}

pub fn timing_objective_derivative(
    tau: f64,
    pilot_times: &[f64],
    pilots: &[f64],
    pulse: &PulseShape,
    params: &TemParams,
) -> Result<f64> {
    Ok(TimingProblem::new(pilot_times, pilots, pulse, params)?.derivative(tau))
}

struct NewtonRun {
    tau: f64,
    converged: bool,
    iterations: usize,
}

fn newton(problem: &TimingProblem<'_>, start: f64, config: &NewtonConfig) -> NewtonRun {
    let period = problem.pulse.symbol_period();
    let (lo, hi) = (-0.5 * period, 0.5 * period);
    let step_tol = config.step_tolerance * period;

    let mut tau = start;
    let mut d = problem.derivative(tau);
    let initial = d.abs();
    let mut clamp_hits = 0;
    for iteration in 1..=config.max_iterations {
        let curvature = problem.second_derivative(tau);
        if !(curvature.is_finite() && curvature != 0.0 && d.is_finite()) {
            return NewtonRun { tau, converged: false, iterations: iteration };
        }
        let step = d / curvature;
        let mut damping = config.damping;
        let (mut raw, mut next, mut d_next);
        loop {
            raw = tau - damping * step;
            next = raw.clamp(lo, hi);
            d_next = problem.derivative(next);
            if d_next.abs() <= d.abs() || damping < 1.0 / 64.0 {
                break;
            }
            damping *= 0.5;
        }
        if raw != next {
            clamp_hits += 1;
            if clamp_hits >= 2 {
                return NewtonRun { tau, converged: false, iterations: iteration };
            }
        }
        if initial > 0.0 && d_next.abs() > 10.0 * initial {
            return NewtonRun { tau, converged: false, iterations: iteration };
        }
        let moved = (next - tau).abs();
        tau = next;
        d = d_next;
        if moved < step_tol {
            return NewtonRun { tau, converged: true, iterations: iteration };
        }
    }
    NewtonRun { tau, converged: false, iterations: config.max_iterations }
}

/// Golden-section minimisation of `J` on `[a, b]`.
fn golden_section(problem: &TimingProblem<'_>, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = problem.objective(c);
    let mut fd = problem.objective(d);
    for _ in 0..GOLDEN_ITERATIONS {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = problem.objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = problem.objective(d);
        }
    }
    0.5 * (a + b)
}

fn better(candidate: &Candidate, incumbent: Option<&Candidate>) -> bool {
    match incumbent {
        None => true,
        Some(best) => {
            if candidate.objective < best.objective - OBJECTIVE_TIE {
                true
            } else if (candidate.objective - best.objective).abs() <= OBJECTIVE_TIE {
                candidate.tau.abs() < best.tau.abs()
            } else {
                false
            }
        }
    }
}

/// Multi-start Newton search for the ML timing offset.
///
/// A start that does not converge (it leaves the clamp range twice, its
/// derivative grows tenfold, or it runs out of iterations) is replaced by a
/// golden-section search of `J` over one guess spacing on either side of it.
pub fn estimate_tau_ml(
    pilot_times: &[f64],
    pilots: &[f64],
    pulse: &PulseShape,
    params: &TemParams,
    config: &NewtonConfig,
) -> Result<TimingEstimate> {
    config.validate()?;
    if pilot_times.len() < 2 {
        return Err(Error::InsufficientPilotSpikes { found: pilot_times.len() });
    }
    let problem = TimingProblem::new(pilot_times, pilots, pulse, params)?;
    let period = pulse.symbol_period();
    let spacing = period / (config.n_guess - 1) as f64;

    let mut candidates = Vec::with_capacity(config.n_guess);
    let mut best: Option<Candidate> = None;
    for index in 0..config.n_guess {
        let start = config.initial_guess(index, period);
        let run = newton(&problem, start, config);
        let tau = if run.converged {
            run.tau
        } else {
            let a = (start - spacing).max(-0.5 * period);
            let b = (start + spacing).min(0.5 * period);
            golden_section(&problem, a, b)
        };
        let candidate = Candidate {
            start,
            tau,
            objective: problem.objective(tau),
            converged: run.converged,
            iterations: run.iterations,
        };
        if better(&candidate, best.as_ref()) {
            best = Some(candidate);
        }
        candidates.push(candidate);
    }
    let best = best.expect("n_guess >= 2");
    Ok(TimingEstimate {
        tau_hat: best.tau,
        objective: best.objective,
        converged: best.converged,
        starts_converged: candidates.iter().filter(|c| c.converged).count(),
        iterations_total: candidates.iter().map(|c| c.iterations).sum(),
        candidates,
    })
}
