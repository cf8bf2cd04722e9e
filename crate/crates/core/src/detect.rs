//! Data detection from the data firing times once the timing offset is known.
//!
//! The detection system removes the known pilot contribution from the
//! observations and leaves the weighted least-squares problem
//! `min_s ‖T_d^{1/2}(y_d - Ḡ s)‖²` over the data symbols. Three detectors work on
//! it or on the raw record:
//!
//! * weighted zero forcing followed by slicing (the main receiver),
//! * exhaustive search over the alphabet (small instances only),
//! * per-symbol spike counting (the count-based baseline).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{model_sum, observation, validate_times};
use crate::tem::{encode, NoiseModel, TemParams};
use crate::waveform::{Constellation, PulseShape, TxSignal};

/// Largest alphabet-power accepted by [`brute_force_ml`].
pub const BRUTE_FORCE_LIMIT: f64 = (1u64 << 20) as f64;

/// Condition number of `ḠᵀT_dḠ` above which zero forcing is refused.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Zf,
    MlBruteforce,
    SpikeCount,
}

impl DetectorKind {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::Zf => "zf",
            DetectorKind::MlBruteforce => "ml_bruteforce",
            DetectorKind::SpikeCount => "spike_count",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSystem {
    pub y: DVector<f64>,
    pub g_bar: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub tau_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolEstimate {
    pub pre_estimate: Vec<f64>,
    pub decided: Vec<f64>,
    pub method: DetectorKind,
}

/// Builds `(y_d, Ḡ, T_d)` from the data firing vector.
///
/// The pilot correction sums over every pilot whose shifted support meets an
/// interval; for anchors within `L_f` pilot periods of the data this is exactly
/// the sum over the last `L_f + 1` pilots.
pub fn build_detection_system(
    data_times: &[f64],
    pilots: &[f64],
    tau_hat: f64,
    pulse: &PulseShape,
    params: &TemParams,
    data_len: usize,
) -> Result<DetectionSystem> {
    validate_times(data_times)?;
    let memory = pulse.memory();
    if memory >= pilots.len() {
        return Err(Error::InvalidArgument(format!(
            "pulse memory {memory} must be below the pilot length {}",
            pilots.len()
        )));
    }
    let period = pulse.symbol_period();
    let pilot_len = pilots.len();
    let k = data_times.len() - 1;
    let mut y = DVector::zeros(k);
    let mut weights = DVector::zeros(k);
    let mut g_bar = DMatrix::zeros(k, data_len);
    for (row, w) in data_times.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        y[row] = observation(params, a, b) - model_sum(pulse, pilots, 0, a, b, tau_hat);
        weights[row] = 1.0 / (b - a);
        for l in 0..data_len {
            g_bar[(row, l)] = pulse.integral_unchecked(a, b, (pilot_len + l) as f64 * period + tau_hat);
        }
    }
    Ok(DetectionSystem { y, g_bar, weights, tau_used: tau_hat })
}

impl DetectionSystem {
    pub fn data_len(&self) -> usize {
        self.g_bar.ncols()
    }

    /// `‖T_d^{1/2}(y_d - Ḡ s)‖²`.
    pub fn objective(&self, symbols: &[f64]) -> f64 {
        let s = DVector::from_column_slice(symbols);
        let r = &self.y - &self.g_bar * s;
        r.iter().zip(self.weights.iter()).map(|(e, w)| w * e * e).sum()
    }

    pub fn with_scaled_weights(&self, c: f64) -> Self {
        Self { weights: &self.weights * c, ..self.clone() }
    }

    fn whitened(&self) -> (DMatrix<f64>, DVector<f64>) {
        let root = self.weights.map(f64::sqrt);
        let mut a = self.g_bar.clone();
        for (mut row, w) in a.row_iter_mut().zip(root.iter()) {
            row *= *w;
        }
        (a, self.y.component_mul(&root))
    }
}

/// Weighted zero-forcing pre-estimate `(ḠᵀT_dḠ)⁻¹ḠᵀT_d y_d`, solved through a QR
/// factorisation of `T_d^{1/2}Ḡ`.
pub fn zf_detect(system: &DetectionSystem) -> Result<Vec<f64>> {
    let (rows, cols) = system.g_bar.shape();
    if rows < cols {
        return Err(Error::RankDeficient { condition: f64::INFINITY });
    }
    if cols == 0 {
        return Ok(Vec::new());
    }
    let (a, rhs) = system.whitened();
    let singular = a.clone().svd(false, false).singular_values;
    let largest = singular.max();
    let smallest = singular.min();
    let condition = if smallest > 0.0 { (largest / smallest).powi(2) } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let qr = a.qr();
    let qt_rhs = qr.q().transpose() * rhs;
    let solution = qr
        .r()
        .solve_upper_triangular(&qt_rhs)
        .ok_or(Error::RankDeficient { condition })?;
    Ok(solution.iter().copied().collect())
}

/// Nearest constellation point per entry; midpoints go to the smaller amplitude.
pub fn hard_decision(pre_estimate: &[f64], constellation: &Constellation) -> Vec<f64> {
    pre_estimate.iter().map(|&x| constellation.nearest(x)).collect()
}

pub fn detect_zf(system: &DetectionSystem, constellation: &Constellation) -> Result<SymbolEstimate> {
    let pre_estimate = zf_detect(system)?;
    let decided = hard_decision(&pre_estimate, constellation);
    Ok(SymbolEstimate { pre_estimate, decided, method: DetectorKind::Zf })
}

/// Exhaustive minimiser of the weighted objective over `𝒜^{L_d}`; the first
/// minimiser in lexicographic order of constellation indices wins ties.
pub fn brute_force_ml(system: &DetectionSystem, constellation: &Constellation) -> Result<Vec<f64>> {
    let len = system.data_len();
    let m = constellation.order();
    let size = (m as f64).powi(len as i32);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::SearchSpaceTooLarge { size, limit: BRUTE_FORCE_LIMIT });
    }
    let points = constellation.points();
    let mut digits = vec![0usize; len];
    let mut best_digits = digits.clone();
    let mut best = f64::INFINITY;

    // the residual y - Ḡs is updated column by column as digits change
    let exact_residual = |digits: &[usize]| {
        let s: Vec<f64> = digits.iter().map(|&d| points[d]).collect();
        &system.y - &system.g_bar * DVector::from_vec(s)
    };
    let mut residual = exact_residual(&digits);
    loop {
        let value: f64 = residual
            .iter()
            .zip(system.weights.iter())
            .map(|(e, w)| w * e * e)
            .sum();
        if value < best {
            best = value;
            best_digits.copy_from_slice(&digits);
        }
        // odometer, last digit fastest
        let mut pos = len;
        loop {
            if pos == 0 {
                return Ok(best_digits.iter().map(|&d| points[d]).collect());
            }
            pos -= 1;
            if digits[pos] + 1 < m {
                break;
            }
            digits[pos] = 0;
        }
        digits[pos] += 1;
        if pos + 2 < len {
            residual = exact_residual(&digits);
        } else {
            // only the trailing two digits moved since the last exact refresh
            for j in pos..len {
                let s: f64 = points[digits[j]];
                let prev = if j == pos { points[digits[j] - 1] } else { points[m - 1] };
                if j == pos || digits[j] == 0 {
                    residual.axpy(-(s - prev), &system.g_bar.column(j), 1.0);
                }
            }
        }
    }
}

/// Count-to-symbol map measured by encoding each constellation point in
/// isolation without noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpikeCountCalibration {
    /// Mean firing count in `[-T/2, T/2)` per constellation point, averaged over
    /// evenly spaced integrator phases at the window start.
    pub counts: Vec<f64>,
}

impl SpikeCountCalibration {
    pub fn build(
        constellation: &Constellation,
        pulse: &PulseShape,
        params: &TemParams,
        phases: usize,
    ) -> Result<Self> {
        let period = pulse.symbol_period();
        let phases = phases.max(1);
        let nominal = params.threshold() / params.bias;
        let mut counts = Vec::with_capacity(constellation.order());
        for &a in constellation.points() {
            let signal = TxSignal::from_symbols(vec![a], pulse.clone(), 0.0);
            let mut total = 0usize;
            for i in 0..phases {
                let start = -0.5 * period - nominal * i as f64 / phases as f64;
                let rec = encode(&signal, params, &NoiseModel::none(), (start, 0.5 * period))?;
                total += rec.times().iter().filter(|&&t| t >= -0.5 * period).count();
            }
            counts.push(total as f64 / phases as f64);
        }
        Ok(Self { counts })
    }

    /// Index of the calibrated count nearest to `count`; ties go to the lower index.
    pub fn decide_index(&self, count: usize) -> usize {
        let c = count as f64;
        let mut best = 0;
        for (i, v) in self.counts.iter().enumerate().skip(1) {
            if (c - v).abs() < (c - self.counts[best]).abs() {
                best = i;
            }
        }
        best
    }
}

/// Firing counts `N_l` in `[(L_p + l - 1/2)T + τ̂, (L_p + l + 1/2)T + τ̂)`.
pub fn window_counts(times: &[f64], tau_hat: f64, symbol_period: f64, pilot_len: usize, data_len: usize) -> Vec<usize> {
    (0..data_len)
        .map(|l| {
            let lo = ((pilot_len + l) as f64 - 0.5) * symbol_period + tau_hat;
            let hi = lo + symbol_period;
            let first = times.partition_point(|&t| t < lo);
            let end = times.partition_point(|&t| t < hi);
            end - first
        })
        .collect()
}

pub fn spike_count_detect(
    times: &[f64],
    tau_hat: f64,
    constellation: &Constellation,
    symbol_period: f64,
    pilot_len: usize,
    data_len: usize,
    calibration: &SpikeCountCalibration,
) -> SymbolEstimate {
    let counts = window_counts(times, tau_hat, symbol_period, pilot_len, data_len);
    let decided = counts
        .iter()
        .map(|&n| constellation.points()[calibration.decide_index(n)])
        .collect();
    SymbolEstimate {
        pre_estimate: counts.iter().map(|&n| n as f64).collect(),
        decided,
        method: DetectorKind::SpikeCount,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tem::split_firing_times;
    use crate::waveform::Frame;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_system(y: &[f64]) -> DetectionSystem {
        let n = y.len();
        DetectionSystem {
            y: DVector::from_column_slice(y),
            g_bar: DMatrix::identity(n, n),
            weights: DVector::from_element(n, 1.0),
            tau_used: 0.0,
        }
    }

    struct Noiseless {
        system: DetectionSystem,
        data: Vec<f64>,
    }

    fn noiseless(seed: u64, order: usize, data_len: usize, tau: f64) -> Noiseless {
        let c = Constellation::pam(order, 1.0).unwrap();
        let pulse = PulseShape::root_raised_cosine(1.0, 0.5, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = Frame::new(&c, c.sample(&mut rng, 8), c.sample(&mut rng, data_len), 1.0, 4).unwrap();
        let signal = TxSignal::new(frame.clone(), pulse.clone(), tau).unwrap();
        let params = TemParams::new(0.4, 1.0, 3.0, 1.0).unwrap();
        let end = (8 + data_len) as f64 + 0.5;
        let rec = encode(&signal, &params, &NoiseModel::none(), (-0.5, end)).unwrap();
        let split = split_firing_times(rec.times(), 1.0, 8, 4, data_len).unwrap();
        let system = build_detection_system(&split.data, &frame.pilots, tau, &pulse, &params, data_len).unwrap();
        Noiseless { system, data: frame.data }
    }

    #[test]
    fn identity_system_returns_observation() {
        let sys = identity_system(&[0.3, -1.2, 2.5]);
        let s = zf_detect(&sys).unwrap();
        for (a, b) in s.iter().zip([0.3, -1.2, 2.5]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn underdetermined_system_is_rank_deficient() {
        let sys = DetectionSystem {
            y: DVector::from_column_slice(&[1.0, 2.0]),
            g_bar: DMatrix::from_element(2, 3, 1.0),
            weights: DVector::from_element(2, 1.0),
            tau_used: 0.0,
        };
        assert!(matches!(zf_detect(&sys), Err(Error::RankDeficient { .. })));
        let mut zero_col = identity_system(&[1.0, 1.0, 1.0]);
        zero_col.g_bar[(2, 2)] = 0.0;
        assert!(matches!(zf_detect(&zero_col), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn noiseless_system_is_consistent_and_zf_exact() {
        for seed in 0..10 {
            let n = noiseless(seed, 4, 10, 0.35 - 0.07 * seed as f64);
            let r = &n.system.y - &n.system.g_bar * DVector::from_column_slice(&n.data);
            assert!(r.amax() < 1e-8, "residual {}", r.amax());
            let pre = zf_detect(&n.system).unwrap();
            for (a, b) in pre.iter().zip(&n.data) {
                assert!((a - b).abs() < 1e-8);
            }
            let c = Constellation::pam(4, 1.0).unwrap();
            assert_eq!(hard_decision(&pre, &c), n.data);
        }
    }

    #[test]
    fn normal_equation_residual_vanishes() {
        let mut n = noiseless(21, 4, 8, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for v in n.system.y.iter_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
        let pre = DVector::from_vec(zf_detect(&n.system).unwrap());
        let w = DMatrix::from_diagonal(&n.system.weights);
        let gt_w = n.system.g_bar.transpose() * w;
        let lhs = &gt_w * (&n.system.y - &n.system.g_bar * pre);
        let scale = (&gt_w * &n.system.y).norm();
        assert!(lhs.norm() <= 1e-8 * scale, "{} vs {}", lhs.norm(), scale);
    }

    #[test]
    fn rectangular_pilot_correction_vanishes_past_pilots() {
        let pulse = PulseShape::rectangular(1.0).unwrap();
        let params = TemParams::new(0.3, 1.0, 2.0, 1.0).unwrap();
        let times: Vec<f64> = (0..20).map(|k| 2.5 + k as f64 * 0.15).collect();
        let pilots = [1.0, -1.0, 1.0];
        let sys = build_detection_system(&times, &pilots, 0.0, &pulse, &params, 3).unwrap();
        for (row, w) in times.windows(2).enumerate() {
            let raw = params.threshold() - params.bias * (w[1] - w[0]);
            assert_eq!(sys.y[row], raw);
        }
    }

    #[test]
    fn hand_computed_two_interval_case() {
        // L_p = 1 pilot (+1) on [-1/2, 1/2), data on [1/2, 3/2) and [3/2, 5/2)
        let pulse = PulseShape::rectangular(1.0).unwrap();
        let params = TemParams::new(1.0, 1.0, 2.0, 1.0).unwrap();
        let sys = build_detection_system(&[0.25, 1.0, 2.0], &[1.0], 0.0, &pulse, &params, 2).unwrap();
        assert!((sys.y[0] - (1.0 - 2.0 * 0.75 - 0.25)).abs() < 1e-15);
        assert!((sys.y[1] - (1.0 - 2.0 * 1.0)).abs() < 1e-15);
        assert!((sys.g_bar[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(sys.g_bar[(0, 1)], 0.0);
        assert!((sys.g_bar[(1, 0)] - 0.5).abs() < 1e-15);
        assert!((sys.g_bar[(1, 1)] - 0.5).abs() < 1e-15);
        assert!((sys.weights[0] - 1.0 / 0.75).abs() < 1e-15);
    }

    #[test]
    fn columns_for_unobserved_symbols_are_zero() {
        let pulse = PulseShape::rectangular(1.0).unwrap();
        let params = TemParams::new(0.3, 1.0, 2.0, 1.0).unwrap();
        let times: Vec<f64> = (0..8).map(|k| 1.5 + k as f64 * 0.1).collect();
        let sys = build_detection_system(&times, &[1.0, 1.0], 0.0, &pulse, &params, 4).unwrap();
        assert!(sys.g_bar.column(3).iter().all(|&v| v == 0.0));
        assert!(sys.g_bar.column(0).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn memory_must_be_below_pilot_length() {
        let pulse = PulseShape::root_raised_cosine(1.0, 0.5, 4).unwrap();
        let params = TemParams::new(0.3, 1.0, 2.0, 1.0).unwrap();
        assert!(build_detection_system(&[0.0, 1.0], &[1.0; 4], 0.0, &pulse, &params, 1).is_err());
    }

    #[test]
    fn hard_decision_cases() {
        let c = Constellation::pam(2, 1.0).unwrap();
        assert_eq!(hard_decision(&[0.9, 0.0, -7.0], &c), vec![1.0, -1.0, -1.0]);
    }

    proptest! {
        #[test]
        fn hard_decision_is_nearest(xs in proptest::collection::vec(-5.0f64..5.0, 1..20), m in 0usize..4) {
            let c = Constellation::pam([2, 4, 8, 16][m], 1.0).unwrap();
            let half = 0.5 * c.spacing();
            for (x, d) in xs.iter().zip(hard_decision(&xs, &c)) {
                prop_assert!(c.contains(d));
                let beyond = *x > c.max_amplitude() || *x < -c.max_amplitude();
                prop_assert!((x - d).abs() <= half + 1e-12 || beyond);
            }
        }
    }

    #[test]
    fn brute_force_recovers_noiseless_and_agrees_with_zf() {
        let c = Constellation::pam(2, 1.0).unwrap();
        for seed in 0..100 {
            let n = noiseless(seed, 2, 6, 0.2);
            let ml = brute_force_ml(&n.system, &c).unwrap();
            assert_eq!(ml, n.data);
            let zf = detect_zf(&n.system, &c).unwrap();
            assert_eq!(zf.decided, ml);
        }
    }

    #[test]
    fn brute_force_matches_naive_enumeration() {
        let c = Constellation::pam(4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let (k, l) = (7, 4);
            let sys = DetectionSystem {
                y: DVector::from_fn(k, |_, _| rng.random_range(-2.0..2.0)),
                g_bar: DMatrix::from_fn(k, l, |_, _| rng.random_range(-1.0..1.0)),
                weights: DVector::from_fn(k, |_, _| rng.random_range(0.5..3.0)),
                tau_used: 0.0,
            };
            let fast = brute_force_ml(&sys, &c).unwrap();
            let mut best = (f64::INFINITY, vec![]);
            for code in 0..4usize.pow(l as u32) {
                let s: Vec<f64> = (0..l).rev().map(|j| c.points()[(code / 4usize.pow(j as u32)) % 4]).collect();
                let v = sys.objective(&s);
                if v < best.0 {
                    best = (v, s);
                }
            }
            assert_eq!(fast, best.1);
            // ML never does worse than ZF + slicing
            let zf = detect_zf(&sys, &c).unwrap();
            assert!(sys.objective(&fast) <= sys.objective(&zf.decided));
        }
    }

    #[test]
    fn brute_force_guard() {
        let c = Constellation::pam(2, 1.0).unwrap();
        let sys = DetectionSystem {
            y: DVector::zeros(30),
            g_bar: DMatrix::zeros(30, 21),
            weights: DVector::from_element(30, 1.0),
            tau_used: 0.0,
        };
        assert!(matches!(brute_force_ml(&sys, &c), Err(Error::SearchSpaceTooLarge { .. })));
    }

    #[test]
    fn weight_scaling_leaves_estimates_unchanged() {
        let mut n = noiseless(8, 2, 6, -0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for v in n.system.y.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        let c = Constellation::pam(2, 1.0).unwrap();
        let scaled = n.system.with_scaled_weights(17.0);
        let a = zf_detect(&n.system).unwrap();
        let b = zf_detect(&scaled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
        assert_eq!(brute_force_ml(&n.system, &c).unwrap(), brute_force_ml(&scaled, &c).unwrap());
    }

    #[test]
    fn spike_count_self_consistent_for_isolated_symbols() {
        let c = Constellation::pam(4, 1.0).unwrap();
        let pulse = PulseShape::root_raised_cosine(1.0, 0.5, 4).unwrap();
        let params = TemParams::new(0.05, 1.0, 3.0, 1.0).unwrap();
        let cal = SpikeCountCalibration::build(&c, &pulse, &params, 16).unwrap();
        assert!(cal.counts.windows(2).all(|w| w[1] > w[0]));
        for &a in c.points() {
            let signal = TxSignal::from_symbols(vec![a], pulse.clone(), 0.0);
            let rec = encode(&signal, &params, &NoiseModel::none(), (-0.5, 0.5)).unwrap();
            // symbol index 0 sits at the centre of the window for L_p = 0
            let est = spike_count_detect(rec.times(), 0.0, &c, 1.0, 0, 1, &cal);
            assert_eq!(est.decided, vec![a]);
        }
    }

    #[test]
    fn zero_counts_map_to_smallest_symbol() {
        let c = Constellation::pam(8, 1.0).unwrap();
        let cal = SpikeCountCalibration { counts: (0..8).map(|i| 3.0 + 2.0 * i as f64).collect() };
        let est = spike_count_detect(&[], 0.0, &c, 1.0, 4, 3, &cal);
        assert_eq!(est.decided, vec![c.points()[0]; 3]);
    }

    #[test]
    fn window_counts_respect_offset() {
        let times = [3.4, 3.6, 4.0, 4.45, 4.55];
        assert_eq!(window_counts(&times, 0.0, 1.0, 4, 1), vec![3]);
        assert_eq!(window_counts(&times, 0.1, 1.0, 4, 1), vec![4]);
    }
}
