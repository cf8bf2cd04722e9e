use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use temlink::detect::{
    brute_force_ml, build_detection_system, detect_zf, spike_count_detect, DetectorKind,
};
use temlink::harness::{self, Axis, ExperimentConfig, Executor, Scenario};
use temlink::tem::{encode, split_firing_times, FiringRecord, NoiseModel};
use temlink::timing::{estimate_tau_ml, timing_objective, timing_objective_derivative};
use temlink::waveform::{Frame, TxSignal};

#[derive(Parser)]
#[command(name = "temlink", version, about = "Integrate-and-fire time-encoding link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial and print its result as JSON.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Trial seed; defaults to the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a Monte Carlo sweep and write the CSV table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// snr, pilot or n_guess.
        #[arg(long, default_value = "snr")]
        axis: String,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run trials on the calling thread only.
        #[arg(long)]
        sequential: bool,
    },
    /// Draw a frame, encode it and write the firing record.
    Encode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the transmitted frame as JSON.
        #[arg(long)]
        frame_out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recover the data symbols from a firing record and the known pilots.
    Decode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        record: PathBuf,
        /// Frame JSON; only its pilots and symbol period are used.
        #[arg(long)]
        frame: PathBuf,
        #[arg(long, default_value = "zf")]
        detector: String,
    },
    /// Run a quick invariant suite.
    Selftest,
}

/// Exit code 1: bad invocation or configuration. Exit code 2: the run failed.
enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Failure::Config(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

#[derive(Serialize, Deserialize)]
struct FrameFile {
    #[serde(flatten)]
    frame: Frame,
    timing_offset: f64,
}

#[derive(Serialize)]
struct Decoded {
    detector: DetectorKind,
    tau_hat: f64,
    symbols: Vec<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = configure_threads().and_then(|()| run(cli.command));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("TEMLINK_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Config(format!("TEMLINK_THREADS must be a positive integer, got {value:?}")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(Failure::runtime)?;
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let mut config = ExperimentConfig::from_path(path).map_err(Failure::config)?;
    if let Some(seed) = seed {
        config.base_seed = seed;
    }
    Ok(config)
}

fn base_scenario(config: &ExperimentConfig) -> Result<Scenario, Failure> {
    config.base_scenario().map_err(Failure::config)
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { config, seed } => {
            let config = load(&config, seed)?;
            let result = harness::run_trial(&base_scenario(&config)?, config.base_seed);
            println!("{}", serde_json::to_string_pretty(&result).map_err(Failure::runtime)?);
            Ok(())
        }
        Command::Sweep { config, axis, out, seed, sequential } => {
            let config = load(&config, seed)?;
            let axis: Axis = axis.parse().map_err(Failure::config)?;
            let executor = if sequential { Executor::Sequential } else { Executor::Parallel };
            let rows = harness::run_sweep(&config, axis, executor).map_err(Failure::config)?;
            let file = fs::File::create(&out).map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;
            harness::write_csv(&rows, std::io::BufWriter::new(file)).map_err(Failure::runtime)
        }
        Command::Encode { config, out, frame_out, seed } => {
            let config = load(&config, seed)?;
            let scenario = base_scenario(&config)?;
            let draw = harness::draw_trial(&scenario, config.base_seed).map_err(Failure::runtime)?;
            let signal = TxSignal::new(draw.frame.clone(), scenario.pulse.clone(), draw.tau)
                .map_err(Failure::runtime)?;
            let noise = NoiseModel::awgn(scenario.psd, draw.noise_seed).map_err(Failure::runtime)?;
            let record = encode(&signal, &scenario.params, &noise, scenario.window()).map_err(Failure::runtime)?;
            fs::write(&out, record.to_text()).map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;
            if let Some(path) = frame_out {
                let file = FrameFile { frame: draw.frame, timing_offset: draw.tau };
                let text = serde_json::to_string_pretty(&file).map_err(Failure::runtime)?;
                fs::write(&path, text).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
            }
            Ok(())
        }
        Command::Decode { config, record, frame, detector } => {
            let config = load(&config, None)?;
            let kind: DetectorKind = serde_json::from_value(serde_json::Value::String(detector.clone()))
                .map_err(|_| Failure::Config(format!("unknown detector {detector:?}")))?;
            let record_text = fs::read_to_string(&record)
                .map_err(|e| Failure::config(format!("{}: {e}", record.display())))?;
            let record = FiringRecord::from_text(&record_text).map_err(Failure::config)?;
            let frame_text = fs::read_to_string(&frame)
                .map_err(|e| Failure::config(format!("{}: {e}", frame.display())))?;
            let frame: FrameFile = serde_json::from_str(&frame_text).map_err(Failure::config)?;
            let decoded = decode(&config, &record, &frame.frame.pilots, kind).map_err(Failure::runtime)?;
            println!("{}", serde_json::to_string(&decoded).map_err(Failure::runtime)?);
            Ok(())
        }
        Command::Selftest => selftest(),
    }
}

fn decode(
    config: &ExperimentConfig,
    record: &FiringRecord,
    pilots: &[f64],
    kind: DetectorKind,
) -> temlink::Result<Decoded> {
    let constellation = config.constellation()?;
    let pulse = config.pulse()?;
    let params = record.params();
    let period = pulse.symbol_period();
    let pilot_len = pilots.len();
    let data_len = config.frame.data_len;
    let effective = temlink::waveform::effective_pilot_length(pilot_len, pulse.memory())?;
    let split = split_firing_times(record.times(), period, pilot_len, effective, data_len)?;
    let timing = estimate_tau_ml(&split.pilot, pilots, &pulse, params, &config.estimator)?;
    let tau_hat = timing.tau_hat;
    let symbols = match kind {
        DetectorKind::Zf | DetectorKind::MlBruteforce => {
            let system = build_detection_system(&split.data, pilots, tau_hat, &pulse, params, data_len)?;
            if kind == DetectorKind::Zf {
                detect_zf(&system, &constellation)?.decided
            } else {
                brute_force_ml(&system, &constellation)?
            }
        }
        DetectorKind::SpikeCount => {
            let calibration = temlink::detect::SpikeCountCalibration::build(
                &constellation,
                &pulse,
                params,
                harness::config::CALIBRATION_PHASES,
            )?;
            spike_count_detect(record.times(), tau_hat, &constellation, period, pilot_len, data_len, &calibration)
                .decided
        }
    };
    Ok(Decoded { detector: kind, tau_hat, symbols })
}

const SELFTEST_CONFIG: &str = r#"{
    "schema_version": 1,
    "constellation": {"order": 4, "energy": 1.0},
    "pulse": {"kind": "root_raised_cosine", "rolloff": 0.5, "memory": 2},
    "frame": {"pilot_len": 8, "data_len": 6, "symbol_period": 1.0},
    "tem": {"kappa": 0.4, "bias": 3.0, "dt": 0.005},
    "detectors": ["zf", "spike_count"]
}"#;

fn selftest() -> Result<(), Failure> {
    let config = ExperimentConfig::from_json(SELFTEST_CONFIG).map_err(Failure::runtime)?;
    let scenario = base_scenario(&config)?;
    let mut ok = true;
    let mut report = |name: &str, pass: bool| {
        println!("{} {name}", if pass { "PASS" } else { "FAIL" });
        ok &= pass;
    };

    let trials: Vec<_> = (0..5).map(|seed| harness::run_trial(&scenario, seed)).collect();
    report(
        "noiseless trials recover timing and data",
        trials.iter().all(|r| {
            r.failure.is_none()
                && r.timing_sq_error.is_some_and(|e| e.sqrt() < 1e-6)
                && r.outcome(DetectorKind::Zf).is_some_and(|o| o.symbol_errors == 0)
        }),
    );
    report(
        "trials are deterministic",
        (0..5).all(|seed| harness::run_trial(&scenario, seed) == trials[seed as usize]),
    );

    let gradient_ok = (|| -> temlink::Result<bool> {
        let draw = harness::draw_trial(&scenario, 9)?;
        let signal = TxSignal::new(draw.frame.clone(), scenario.pulse.clone(), draw.tau)?;
        let record = encode(&signal, &scenario.params, &NoiseModel::none(), scenario.window())?;
        let split = split_firing_times(
            record.times(),
            1.0,
            scenario.pilot_len,
            scenario.effective_pilot_len,
            scenario.data_len,
        )?;
        let (pulse, params, pilots) = (&scenario.pulse, &scenario.params, &draw.frame.pilots);
        let h = 1e-5;
        for tau in [-0.4, -0.1, 0.2, 0.45] {
            let analytic = timing_objective_derivative(tau, &split.pilot, pilots, pulse, params)?;
            let numeric = (timing_objective(tau + h, &split.pilot, pilots, pulse, params)?
                - timing_objective(tau - h, &split.pilot, pilots, pulse, params)?)
                / (2.0 * h);
            if (analytic - numeric).abs() > 1e-5 * analytic.abs().max(1e-6) {
                return Ok(false);
            }
        }
        Ok(true)
    })();
    report("objective derivative matches finite differences", gradient_ok.unwrap_or(false));

    if ok {
        Ok(())
    } else {
        Err(Failure::Runtime("selftest failed".into()))
    }
}
