//! Acceptance gate. Each test prints exactly one `PASS`/`FAIL` line and then
//! asserts, so `cargo test --test acceptance -- --nocapture` gives a summary.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use temlink::detect::{brute_force_ml, build_detection_system, detect_zf, DetectorKind};
use temlink::harness::{self, Axis, ExperimentConfig, Executor, Scenario};
use temlink::likelihood::build_matrices;
use temlink::tem::{encode, split_firing_times, t_transform_residuals, NoiseModel, TemParams};
use temlink::timing::{estimate_tau_ml, timing_objective, timing_objective_derivative, NewtonConfig};
use temlink::waveform::{Constellation, Frame, PulseShape, TxSignal};

fn report(id: u32, name: &str, pass: bool, detail: &str, elapsed: Duration, limit: Duration) {
    let in_time = elapsed <= limit;
    let verdict = if pass && in_time { "PASS" } else { "FAIL" };
    println!(
        "{verdict} criterion {id}: {name}: {detail} ({:.1}s, limit {}s)",
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    assert!(pass, "criterion {id} failed: {detail}");
    assert!(in_time, "criterion {id} exceeded its runtime limit");
}

/// M=4, L_p=12, L_d=16, RRC rolloff 0.5, L_f=4, T=1.
struct Reference {
    constellation: Constellation,
    pulse: PulseShape,
    params: TemParams,
}

const PILOTS: usize = 12;
const DATA: usize = 16;
const MEMORY: usize = 4;

impl Reference {
    fn new() -> Self {
        Self {
            constellation: Constellation::pam(4, 1.0).unwrap(),
            pulse: PulseShape::root_raised_cosine(1.0, 0.5, MEMORY).unwrap(),
            params: TemParams::new(0.5, 1.0, 4.0, 1.0).unwrap(),
        }
    }

    fn frame(&self, rng: &mut ChaCha8Rng) -> Frame {
        let pilots = self.constellation.sample(rng, PILOTS);
        let data = self.constellation.sample(rng, DATA);
        Frame::new(&self.constellation, pilots, data, 1.0, MEMORY).unwrap()
    }

    fn window(&self) -> (f64, f64) {
        (-0.5, (PILOTS + DATA) as f64 + 0.5)
    }
}

#[test]
fn criterion_1_noiseless_end_to_end_identity() {
    let start = Instant::now();
    let setup = Reference::new();
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = setup.frame(&mut rng);
        let tau = rng.random_range(-0.5..0.5);
        let signal = TxSignal::new(frame.clone(), setup.pulse.clone(), tau).unwrap();
        let record = encode(&signal, &setup.params, &NoiseModel::none(), setup.window()).unwrap();
        let m = build_matrices(record.times(), PILOTS, DATA, tau, &setup.pulse, &setup.params).unwrap();
        let residual = m.residual(&frame.pilots, &frame.data).unwrap();
        worst = worst.max(residual.amax());
    }
    report(
        1,
        "noiseless end-to-end identity",
        worst < 1e-7,
        &format!("max |y - P s_p - G s_d| = {worst:.3e} over 50 frames (tol 1e-7)"),
        start.elapsed(),
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_2_timing_recovery_exactness() {
    let start = Instant::now();
    let setup = Reference::new();
    let effective = PILOTS - MEMORY;
    let grid_points = 10_001;
    let grid_step = 1.0 / (grid_points - 1) as f64;
    let (mut exact, mut grid_agree) = (0, 0);
    let mut worst_error = 0.0f64;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let frame = setup.frame(&mut rng);
        let tau = rng.random_range(-0.45..=0.45);
        let signal = TxSignal::new(frame.clone(), setup.pulse.clone(), tau).unwrap();
        let record = encode(&signal, &setup.params, &NoiseModel::none(), setup.window()).unwrap();
        let split = split_firing_times(record.times(), 1.0, PILOTS, effective, DATA).unwrap();
        let estimate =
            estimate_tau_ml(&split.pilot, &frame.pilots, &setup.pulse, &setup.params, &NewtonConfig::default())
                .unwrap();
        let error = (estimate.tau_hat - tau).abs();
        worst_error = worst_error.max(error);
        if error < 1e-5 {
            exact += 1;
        }
        // grid-search oracle over [-T/2, T/2]
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..grid_points {
            let g = -0.5 + i as f64 * grid_step;
            let j = timing_objective(g, &split.pilot, &frame.pilots, &setup.pulse, &setup.params).unwrap();
            if j < best.0 {
                best = (j, g);
            }
        }
        if (estimate.tau_hat - best.1).abs() <= grid_step {
            grid_agree += 1;
        }
    }
    report(
        2,
        "timing recovery exactness",
        exact >= 98 && grid_agree == 100,
        &format!(
            "{exact}/100 within 1e-5 T (need 98), {grid_agree}/100 within one step of the 10^4-point grid oracle, worst error {worst_error:.2e} T"
        ),
        start.elapsed(),
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_3_gradient_consistency() {
    let start = Instant::now();
    let setup = Reference::new();
    let effective = PILOTS - MEMORY;
    let step = 1e-5;
    let psd = 0.05;
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let frame = setup.frame(&mut rng);
        let tau_true = rng.random_range(-0.5..0.5);
        let signal = TxSignal::new(frame.clone(), setup.pulse.clone(), tau_true).unwrap();
        let noise = NoiseModel::awgn(psd, seed).unwrap();
        let record = encode(&signal, &setup.params, &noise, setup.window()).unwrap();
        let split = split_firing_times(record.times(), 1.0, PILOTS, effective, DATA).unwrap();
        let tau = rng.random_range(-0.5 + step..0.5 - step);
        let objective = |t: f64| {
            timing_objective(t, &split.pilot, &frame.pilots, &setup.pulse, &setup.params).unwrap()
        };
        let analytic =
            timing_objective_derivative(tau, &split.pilot, &frame.pilots, &setup.pulse, &setup.params).unwrap();
        let numeric = (objective(tau + step) - objective(tau - step)) / (2.0 * step);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        worst = worst.max(rel);
    }
    report(
        3,
        "gradient consistency",
        worst < 1e-5,
        &format!("worst relative error {worst:.2e} at 100 random (tau, frame) pairs (tol 1e-5, central step 1e-5 T)"),
        start.elapsed(),
        Duration::from_secs(10),
    );
}

fn scenario(text: &str) -> Scenario {
    ExperimentConfig::from_json(text).unwrap().base_scenario().unwrap()
}

#[test]
fn criterion_4_zf_exactness_and_ml_dominance() {
    let start = Instant::now();

    let noiseless = scenario(
        r#"{"schema_version": 1,
            "constellation": {"order": 4, "energy": 1.0},
            "pulse": {"kind": "root_raised_cosine", "rolloff": 0.5, "memory": 4},
            "frame": {"pilot_len": 12, "data_len": 16, "symbol_period": 1.0},
            "tem": {"kappa": 0.5, "bias": 4.0},
            "detectors": ["zf"]}"#,
    );
    let results = harness::run_trials(&noiseless, 4000, 100, Executor::Parallel);
    let full_rank: Vec<_> = results.iter().filter(|r| r.failure.is_none()).collect();
    let zf_errors: usize = full_rank
        .iter()
        .map(|r| r.outcome(DetectorKind::Zf).unwrap().symbol_errors)
        .sum();

    // noisy M=2, L_d=8 instances at 10 dB
    let noisy = scenario(
        r#"{"schema_version": 1,
            "constellation": {"order": 2, "energy": 1.0},
            "pulse": {"kind": "root_raised_cosine", "rolloff": 0.5, "memory": 2},
            "frame": {"pilot_len": 8, "data_len": 8, "symbol_period": 1.0},
            "tem": {"kappa": 0.5, "bias": 2.5, "dt": 0.002},
            "noise": {"mode": "snr_db", "values": [10.0]},
            "detectors": ["zf"]}"#,
    );
    let (mut instances, mut dominated, mut ml_errors, mut zf_noisy_errors) = (0, 0, 0, 0);
    for seed in 0..100u64 {
        let draw = harness::draw_trial(&noisy, 5000 + seed).unwrap();
        let signal = TxSignal::new(draw.frame.clone(), noisy.pulse.clone(), draw.tau).unwrap();
        let noise = NoiseModel::awgn(noisy.psd, draw.noise_seed).unwrap();
        let record = encode(&signal, &noisy.params, &noise, noisy.window()).unwrap();
        let split = split_firing_times(record.times(), 1.0, 8, 6, 8).unwrap();
        let timing =
            estimate_tau_ml(&split.pilot, &draw.frame.pilots, &noisy.pulse, &noisy.params, &noisy.estimator).unwrap();
        let system = build_detection_system(
            &split.data,
            &draw.frame.pilots,
            timing.tau_hat,
            &noisy.pulse,
            &noisy.params,
            8,
        )
        .unwrap();
        let Ok(zf) = detect_zf(&system, &noisy.constellation) else {
            continue;
        };
        let ml = brute_force_ml(&system, &noisy.constellation).unwrap();
        instances += 1;
        // exhaustive search may only lose to ZF by summation roundoff
        let (j_ml, j_zf) = (system.objective(&ml), system.objective(&zf.decided));
        if j_ml <= j_zf + 1e-12 * j_zf.abs() {
            dominated += 1;
        }
        let errors = |d: &[f64]| d.iter().zip(&draw.frame.data).filter(|(a, b)| a != b).count();
        ml_errors += errors(&ml);
        zf_noisy_errors += errors(&zf.decided);
    }

    let pass = full_rank.len() == 100
        && zf_errors == 0
        && instances == 100
        && dominated == instances
        && ml_errors <= zf_noisy_errors;
    report(
        4,
        "ZF exactness and ML dominance",
        pass,
        &format!(
            "noiseless: {} full-rank of 100, {zf_errors} ZF symbol errors; noisy: ML objective <= ZF in {dominated}/{instances}, symbol errors ML {ml_errors} vs ZF {zf_noisy_errors}",
            full_rank.len()
        ),
        start.elapsed(),
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_5_noise_calibration() {
    let start = Instant::now();
    let setup = Reference::new();
    let psd = 0.05;
    let (mut sum_sq, mut sum_dt, mut sum_weighted, mut n) = (0.0, 0.0, 0.0, 0usize);
    let mut seed = 0;
    while n < 10_000 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let frame = setup.frame(&mut rng);
        let tau = rng.random_range(-0.5..0.5);
        let signal = TxSignal::new(frame, setup.pulse.clone(), tau).unwrap();
        let noise = NoiseModel::awgn(psd, 7000 + seed).unwrap();
        let record = encode(&signal, &setup.params, &noise, setup.window()).unwrap();
        let residuals = t_transform_residuals(&record, &signal, &setup.params);
        for (e, w) in residuals.iter().zip(record.times().windows(2)) {
            let dt = w[1] - w[0];
            sum_sq += e * e;
            sum_dt += dt;
            sum_weighted += e * e / dt;
        }
        n += residuals.len();
        seed += 1;
    }
    // Σε² / (σ² Σ Δt) and mean(ε² / Δt) / σ² both estimate 1
    let pooled = sum_sq / (psd * sum_dt);
    let weighted = sum_weighted / n as f64 / psd;
    let pass = (pooled - 1.0).abs() < 0.1 && (weighted - 1.0).abs() < 0.1;
    report(
        5,
        "noise calibration",
        pass,
        &format!("{n} intervals: var/(sigma^2 interval) = {pooled:.4}, mean(eps^2/interval)/sigma^2 = {weighted:.4} (tol 10%)"),
        start.elapsed(),
        Duration::from_secs(60),
    );
}

/// Low-firing-rate link: b = 2 against sup|r| of about 1.1, roughly two firings
/// per symbol period.
const LOW_RATE_SWEEP: &str = r#"{
    "schema_version": 1,
    "constellation": {"order": 2, "energy": 1.0},
    "pulse": {"kind": "root_raised_cosine", "rolloff": 0.5, "memory": 2},
    "frame": {"pilot_len": 12, "data_len": 8, "symbol_period": 1.0},
    "tem": {"kappa": 1.0, "bias": 2.0, "dt": 0.005},
    "noise": {"mode": "snr_db", "values": [5, 10, 15, 20, 25, 30]},
    "detectors": ["zf", "spike_count"],
    "trials": 10000,
    "base_seed": 2024
}"#;

#[test]
fn criterion_6_qualitative_reproduction() {
    let start = Instant::now();
    let config = ExperimentConfig::from_json(LOW_RATE_SWEEP).unwrap();
    let rows = harness::run_sweep(&config, Axis::Snr, Executor::Parallel).unwrap();

    let mut mse_ok = rows.len() == 6;
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let slack = a.timing_mse_se.unwrap() + b.timing_mse_se.unwrap();
        mse_ok &= b.timing_mse.unwrap() <= a.timing_mse.unwrap() + slack;
    }
    let ser_ok = rows.iter().all(|r| r.ser_zf.unwrap().ser <= r.ser_count.unwrap().ser);
    let trials_ok = rows.iter().all(|r| r.trials >= 10_000);
    let curve: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{}dB mse {:.2e} zf {:.4} count {:.4}",
                r.sweep_value,
                r.timing_mse.unwrap(),
                r.ser_zf.unwrap().ser,
                r.ser_count.unwrap().ser
            )
        })
        .collect();
    report(
        6,
        "qualitative reproduction (timing MSE vs SNR, ZF vs spike count)",
        mse_ok && ser_ok && trials_ok,
        &format!(
            "mse non-increasing within SE: {mse_ok}, ZF <= spike count everywhere: {ser_ok}; {}",
            curve.join("; ")
        ),
        start.elapsed(),
        Duration::from_secs(15 * 60),
    );
}

#[test]
fn criterion_7_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        r#"{"schema_version": 1,
            "constellation": {"order": 2, "energy": 1.0},
            "pulse": {"kind": "root_raised_cosine", "rolloff": 0.5, "memory": 2},
            "frame": {"pilot_len": 6, "data_len": 6, "symbol_period": 1.0},
            "tem": {"kappa": 0.8, "bias": 2.0, "dt": 0.005},
            "noise": {"mode": "snr_db", "values": [5, 15, 25]},
            "detectors": ["zf", "ml_bruteforce", "spike_count"],
            "trials": 300, "base_seed": 1}"#,
    )
    .unwrap();
    let run = |name: &str, threads: Option<&str>, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_temlink"));
        cmd.args(["sweep", "--config"]).arg(&config_path).args(["--axis", "snr", "--out"]).arg(&out);
        cmd.args(["--seed", "77"]).args(extra);
        if let Some(t) = threads {
            cmd.env("TEMLINK_THREADS", t);
        }
        let status = cmd.status().unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    let first = run("a.csv", None, &[]);
    let second = run("b.csv", None, &[]);
    let single = run("c.csv", Some("1"), &[]);
    let threaded = run("d.csv", Some("3"), &[]);
    let sequential = run("e.csv", None, &["--sequential"]);
    let identical = [&second, &single, &threaded, &sequential].iter().all(|o| **o == first);
    let header_ok = String::from_utf8_lossy(&first).lines().next() == Some(&harness::CSV_HEADER.join(","));
    report(
        7,
        "determinism",
        identical && header_ok && !first.is_empty(),
        &format!("5 sweep runs ({} bytes each) byte-identical: {identical}, frozen header: {header_ok}", first.len()),
        start.elapsed(),
        Duration::from_secs(300),
    );
}
