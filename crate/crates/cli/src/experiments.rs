//! Monte Carlo experiment runner.
//!
//! Every trial derives its seeds from the base seed, the grid index, and the
//! trial index only — never from the method — so all methods see identical
//! channel and noise realizations (paired comparison). Aggregation is
//! sum-based and ordered by (grid point, trial), so output is independent of
//! any execution interleaving.

use std::time::Instant;

use num_complex::Complex64;

use jfsce_core::equalizer::{design_budget_sweep, design_mmse_equalizer, evaluate_symbol_mse};
use jfsce_core::estimators::{
    classical_jfsce, conventional_estimate, correlate_boundary, cosamp, derive_boundary, emgmamp,
    ideal_estimate, omp, reweighted_l1, sbl, EstimateReport, Method, SolverParams,
};
use jfsce_core::loopback::{locate_training_window, run_loopback, write_iq_dump, LoopbackConfig};
use jfsce_core::measurement::{
    build_conventional_system, build_measurement_system, MeasurementSystem,
};
use jfsce_core::rng::{complex_gaussian, derive_seed, rng_from_seed, uniform_index};
use jfsce_core::signal::{
    build_combined_channel, channel_output, generate_qpsk, reference_cir, reference_cir_small,
    Cir, CombinedChannel, FrameConfig, NoiseSpec,
};

use crate::config::{ExperimentConfig, ExperimentId, Scale};
use crate::csv::ResultRow;

/// Failures the runner cannot continue from (bad dimensions, I/O); estimator
/// failures inside a trial are counted per-row instead.
#[derive(Debug)]
pub struct RunError(pub String);

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for RunError {}

/// Per-(grid point, method) accumulator; sums only, so aggregation order
/// cannot matter.
#[derive(Debug, Clone, Default)]
struct Accumulator {
    mse_sum: f64,
    nmse_sum: f64,
    time_sum: f64,
    iter_sum: f64,
    hits: usize,
    ok: usize,
    failures: usize,
}

impl Accumulator {
    fn absorb(&mut self, outcome: &TrialOutcome) {
        match outcome {
            TrialOutcome::Ok {
                mse,
                nmse,
                time_s,
                iterations,
                boundary_hit,
            } => {
                self.mse_sum += mse;
                self.nmse_sum += nmse;
                self.time_sum += time_s;
                self.iter_sum += *iterations as f64;
                self.hits += usize::from(*boundary_hit);
                self.ok += 1;
            }
            TrialOutcome::Failed => self.failures += 1,
        }
    }

    fn row(
        &self,
        cfg: &ExperimentConfig,
        method: Method,
        sweep_name: &str,
        sweep_value: f64,
    ) -> ResultRow {
        let n = self.ok.max(1) as f64;
        let mean_mse = self.mse_sum / n;
        let mean_nmse = self.nmse_sum / n;
        ResultRow {
            experiment: cfg.id.name().to_string(),
            method: method.name().to_string(),
            sweep_name: sweep_name.to_string(),
            sweep_value,
            trials: self.ok + self.failures,
            mse_linear: mean_mse,
            mse_db: 10.0 * mean_mse.log10(),
            nmse_db: 10.0 * mean_nmse.log10(),
            time_s: if cfg.zero_time { 0.0 } else { self.time_sum / n },
            iters: self.iter_sum / n,
            boundary_hit_rate: self.hits as f64 / n,
            failures: self.failures,
        }
    }
}

enum TrialOutcome {
    Ok {
        mse: f64,
        nmse: f64,
        time_s: f64,
        iterations: usize,
        boundary_hit: bool,
    },
    Failed,
}

/// One synthesized trial: the transmit stream, its channel output, and the
/// measurement window.
struct SyntheticInstance {
    truth: CombinedChannel,
    training: Vec<Complex64>,
    stream: Vec<Complex64>,
    received: Vec<Complex64>,
    system: MeasurementSystem,
    noise_variance: f64,
}

fn synthesize(
    cfg: &ExperimentConfig,
    frame: &FrameConfig,
    cir: &Cir,
    noise_variance: f64,
    training_seed: u64,
    trial_seed: u64,
) -> Result<SyntheticInstance, RunError> {
    let truth = build_combined_channel(cir, cfg.boundary, frame.data_len)
        .map_err(|e| RunError(e.to_string()))?;
    let training = generate_qpsk(frame.training_len(), training_seed);
    let history = generate_qpsk(frame.combined_len() - 1, derive_seed(trial_seed, &[2]));
    let tail = generate_qpsk(
        frame.data_len + cfg.eq_num_taps + frame.combined_len(),
        derive_seed(trial_seed, &[3]),
    );
    let mut stream = training.clone();
    stream.extend_from_slice(&tail);
    let noise = NoiseSpec::new(noise_variance, derive_seed(trial_seed, &[4]))
        .map_err(|e| RunError(e.to_string()))?;
    let received = channel_output(&stream, &history, &truth, &noise);
    let system = build_measurement_system(&training, &received[..frame.training_len()], frame)
        .map_err(|e| RunError(e.to_string()))?;
    Ok(SyntheticInstance {
        truth,
        training,
        stream,
        received,
        system,
        noise_variance,
    })
}

/// Method-specific solver parameters. The iteration caps keep the EM-style
/// solvers affordable at the full problem size; they are generous at the
/// small preset.
fn solver_params(method: Method, sparsity: usize, noise_variance: f64) -> SolverParams {
    let mut p = SolverParams::new(sparsity.max(1), noise_variance).expect("valid params");
    match method {
        Method::Sbl => {
            p.max_iter = 40;
        }
        Method::Emgmamp => {
            p.max_iter = 25;
        }
        Method::ReweightedL1 => {
            p.inner_max_iter = 1000;
            p.reweight_iters = 5;
        }
        _ => {}
    }
    p
}

/// Run one estimator end to end (synchronization included where the method
/// does its own).
fn estimate(
    method: Method,
    instance: &SyntheticInstance,
    frame: &FrameConfig,
    truth_boundary: usize,
    sparsity: usize,
) -> Result<EstimateReport, jfsce_core::Error> {
    let params = solver_params(method, sparsity, instance.noise_variance);
    match method {
        Method::Ideal => Ok(ideal_estimate(&instance.truth)),
        Method::Conventional => {
            let d_hat =
                correlate_boundary(&instance.received, &instance.training, frame.data_len)?;
            let sys = build_conventional_system(
                &instance.training,
                &instance.received[..frame.training_len()],
                d_hat,
                frame,
            )?;
            conventional_estimate(&sys, frame, Method::Conventional)
        }
        Method::GenieConventional => {
            let sys = build_conventional_system(
                &instance.training,
                &instance.received[..frame.training_len()],
                truth_boundary,
                frame,
            )?;
            conventional_estimate(&sys, frame, Method::GenieConventional)
        }
        Method::Classical => classical_jfsce(&instance.system),
        Method::Omp => omp(&instance.system, &params),
        Method::Cosamp => cosamp(&instance.system, &params),
        Method::ReweightedL1 => reweighted_l1(&instance.system, &params),
        Method::Sbl => sbl(&instance.system, &params),
        Method::Emgmamp => emgmamp(&instance.system, &params),
    }
}

fn nmse(estimate: &[Complex64], truth: &CombinedChannel) -> f64 {
    let err: f64 = estimate
        .iter()
        .zip(truth.taps())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    err / truth.energy().max(1e-300)
}

fn boundary_hit(report: &EstimateReport, frame: &FrameConfig, truth_boundary: usize) -> bool {
    match report.boundary_estimate {
        Some(b) => b == truth_boundary,
        None => derive_boundary(&report.estimate, frame.data_len, 0.1) == Ok(truth_boundary),
    }
}

fn run_method_on_instance(
    cfg: &ExperimentConfig,
    method: Method,
    instance: &SyntheticInstance,
    frame: &FrameConfig,
    sparsity: usize,
) -> TrialOutcome {
    let start = Instant::now();
    let report = match estimate(method, instance, frame, instance.truth.boundary(), sparsity) {
        Ok(r) => r,
        Err(_) => return TrialOutcome::Failed,
    };
    let time_s = start.elapsed().as_secs_f64();
    let design = match design_mmse_equalizer(
        &report.estimate,
        cfg.eq_num_taps,
        instance.noise_variance,
        cfg.eq_budget,
    ) {
        Ok(d) => d,
        Err(_) => return TrialOutcome::Failed,
    };
    let mse = match evaluate_symbol_mse(&design, &instance.received, &instance.stream) {
        Ok(m) => m,
        Err(_) => return TrialOutcome::Failed,
    };
    TrialOutcome::Ok {
        mse,
        nmse: nmse(&report.estimate, &instance.truth),
        time_s,
        iterations: report.iterations,
        boundary_hit: boundary_hit(&report, frame, instance.truth.boundary()),
    }
}

fn fixed_cir(scale: Scale) -> Cir {
    match scale {
        Scale::Paper => reference_cir(),
        Scale::Small => reference_cir_small(),
    }
}

/// Random k-sparse CIR over the configured memory: uniform support, complex
/// Gaussian amplitudes, unit energy.
fn random_sparse_cir(memory: usize, sparsity: usize, seed: u64) -> Cir {
    let mut rng = rng_from_seed(seed);
    let mut taps = vec![Complex64::new(0.0, 0.0); memory + 1];
    let amplitudes = complex_gaussian(sparsity, 1.0, &mut rng);
    let mut placed = 0;
    while placed < sparsity {
        let idx = uniform_index(memory + 1, &mut rng);
        if taps[idx].norm_sqr() == 0.0 {
            taps[idx] = amplitudes[placed];
            placed += 1;
        }
    }
    let energy: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
    let scale = energy.sqrt();
    for t in taps.iter_mut() {
        *t /= scale;
    }
    Cir::new(taps).expect("nonempty taps")
}

/// Experiment tag folded into every seed so different studies never share
/// noise streams.
fn experiment_tag(id: ExperimentId) -> u64 {
    match id {
        ExperimentId::MseVsSnr => 0x11,
        ExperimentId::MseVsNe => 0x22,
        ExperimentId::TimeVsNe => 0x33,
        ExperimentId::MseVsSparsity => 0x44,
        ExperimentId::EqTaps => 0x55,
        ExperimentId::LoopbackIndex => 0x66,
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, RunError> {
    match cfg.id {
        ExperimentId::MseVsSnr | ExperimentId::MseVsNe | ExperimentId::MseVsSparsity => {
            run_synthetic_sweep(cfg)
        }
        ExperimentId::TimeVsNe => run_time_study(cfg),
        ExperimentId::EqTaps => run_eq_taps(cfg),
        ExperimentId::LoopbackIndex => run_loopback_index(cfg),
    }
}

fn run_synthetic_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, RunError> {
    let tag = experiment_tag(cfg.id);
    let (sweep_name, grid_len) = match cfg.id {
        ExperimentId::MseVsSnr => ("snr_db", cfg.snr_grid_db.len()),
        ExperimentId::MseVsNe => ("ne", cfg.ne_grid.len()),
        _ => ("sparsity", cfg.sparsity_grid.len()),
    };
    let mut rows = Vec::new();
    for gi in 0..grid_len {
        // resolve the grid point
        let (frame, snr_db, sweep_value) = match cfg.id {
            ExperimentId::MseVsSnr => (cfg.frame, cfg.snr_grid_db[gi], cfg.snr_grid_db[gi]),
            ExperimentId::MseVsNe => {
                let ne = cfg.ne_grid[gi];
                let frame = FrameConfig::new(
                    cfg.frame.data_len,
                    cfg.frame.cir_memory,
                    ne,
                    cfg.frame.training_period,
                )
                .map_err(|e| RunError(e.to_string()))?;
                (frame, cfg.snr_grid_db[0], ne as f64)
            }
            _ => (cfg.frame, cfg.snr_grid_db[0], cfg.sparsity_grid[gi] as f64),
        };
        let noise_variance = 10f64.powf(-snr_db / 10.0);
        let training_seed = derive_seed(cfg.base_seed, &[tag, gi as u64, 1]);
        let mut accs: Vec<Accumulator> = vec![Accumulator::default(); cfg.methods.len()];

        for trial in 0..cfg.trials {
            let trial_seed = derive_seed(cfg.base_seed, &[tag, gi as u64, 2, trial as u64]);
            let (cir, sparsity) = match cfg.id {
                ExperimentId::MseVsSparsity => {
                    let k = cfg.sparsity_grid[gi];
                    (
                        random_sparse_cir(cfg.frame.cir_memory, k, derive_seed(trial_seed, &[5])),
                        k,
                    )
                }
                _ => (fixed_cir(cfg.scale), cfg.sparsity_budget),
            };
            let instance = synthesize(cfg, &frame, &cir, noise_variance, training_seed, trial_seed)?;
            for (mi, &method) in cfg.methods.iter().enumerate() {
                accs[mi].absorb(&run_method_on_instance(cfg, method, &instance, &frame, sparsity));
            }
        }
        for (mi, &method) in cfg.methods.iter().enumerate() {
            rows.push(accs[mi].row(cfg, method, sweep_name, sweep_value));
        }
    }
    Ok(rows)
}

/// Wall-time study: times only the estimator call, then fits a log-log slope
/// per method and appends it as an `ne_slope` row.
pub fn run_time_study(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, RunError> {
    let tag = experiment_tag(cfg.id);
    let snr_db = cfg.snr_grid_db[0];
    let noise_variance = 10f64.powf(-snr_db / 10.0);
    let mut rows = Vec::new();
    let mut times: Vec<Vec<f64>> = vec![Vec::new(); cfg.methods.len()];

    for (gi, &ne) in cfg.ne_grid.iter().enumerate() {
        let frame = FrameConfig::new(
            cfg.frame.data_len,
            cfg.frame.cir_memory,
            ne,
            cfg.frame.training_period,
        )
        .map_err(|e| RunError(e.to_string()))?;
        let training_seed = derive_seed(cfg.base_seed, &[tag, gi as u64, 1]);
        let mut accs: Vec<Accumulator> = vec![Accumulator::default(); cfg.methods.len()];
        for trial in 0..cfg.trials {
            let trial_seed = derive_seed(cfg.base_seed, &[tag, gi as u64, 2, trial as u64]);
            let cir = fixed_cir(cfg.scale);
            let instance = synthesize(
                cfg,
                &frame,
                &cir,
                noise_variance,
                training_seed,
                trial_seed,
            )?;
            for (mi, &method) in cfg.methods.iter().enumerate() {
                let start = Instant::now();
                let report = estimate(
                    method,
                    &instance,
                    &frame,
                    instance.truth.boundary(),
                    cfg.sparsity_budget,
                );
                let elapsed = start.elapsed().as_secs_f64();
                match report {
                    Ok(rep) => {
                        accs[mi].absorb(&TrialOutcome::Ok {
                            mse: 0.0,
                            nmse: nmse(&rep.estimate, &instance.truth),
                            time_s: elapsed,
                            iterations: rep.iterations,
                            boundary_hit: boundary_hit(&rep, &frame, instance.truth.boundary()),
                        });
                    }
                    Err(_) => accs[mi].absorb(&TrialOutcome::Failed),
                }
            }
        }
        for (mi, &method) in cfg.methods.iter().enumerate() {
            let mean_time = accs[mi].time_sum / accs[mi].ok.max(1) as f64;
            times[mi].push(mean_time);
            rows.push(accs[mi].row(cfg, method, "ne", ne as f64));
        }
    }

    // least-squares slope of ln(time) against ln(ne)
    for (mi, &method) in cfg.methods.iter().enumerate() {
        let slope = if cfg.zero_time {
            0.0
        } else {
            log_log_slope(&cfg.ne_grid, &times[mi])
        };
        rows.push(ResultRow {
            experiment: cfg.id.name().to_string(),
            method: method.name().to_string(),
            sweep_name: "ne_slope".to_string(),
            sweep_value: slope,
            trials: cfg.trials,
            mse_linear: 0.0,
            mse_db: 0.0,
            nmse_db: 0.0,
            time_s: 0.0,
            iters: 0.0,
            boundary_hit_rate: 0.0,
            failures: 0,
        });
    }
    Ok(rows)
}

pub fn log_log_slope(ne_grid: &[usize], times: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = ne_grid
        .iter()
        .zip(times)
        .filter(|(_, &t)| t > 0.0)
        .map(|(&ne, &t)| ((ne as f64).ln(), t.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Loopback instance shared by the two testbed studies.
struct LoopbackInstance {
    stream: Vec<Complex64>,
    truth_combined: CombinedChannel,
    system: MeasurementSystem,
    training: Vec<Complex64>,
    /// Transmitted reference timeline aligned with `stream`.
    transmitted: Vec<Complex64>,
    boundary: usize,
    /// Frame delay `m` of the training frame (known to the receiver's frame
    /// counter in steady state).
    frame_delay: usize,
    noise_variance: f64,
}

fn synthesize_loopback(
    lb: &LoopbackConfig,
    noise_variance: f64,
    seed: u64,
) -> Result<LoopbackInstance, RunError> {
    let noise = NoiseSpec::new(noise_variance, derive_seed(seed, &[7]))
        .map_err(|e| RunError(e.to_string()))?;
    let (stream, truth) = run_loopback(lb, &noise, seed).map_err(|e| RunError(e.to_string()))?;
    let mbar = lb.block_len();
    let (m, window) =
        locate_training_window(lb.sample_delay, lb).map_err(|e| RunError(e.to_string()))?;
    let samples = &stream[mbar + window.start..mbar + window.end];
    let training = truth.symbols[..lb.frame.training_len()].to_vec();
    let system = build_measurement_system(&training, samples, &lb.frame)
        .map_err(|e| RunError(e.to_string()))?;
    // transmitted symbol at time t is block[(t - m*M) mod Mbar]
    let shift = m * lb.frame.data_len;
    let transmitted: Vec<Complex64> = (0..stream.len())
        .map(|t| truth.symbols[(t + 2 * mbar - shift) % mbar])
        .collect();
    Ok(LoopbackInstance {
        stream,
        truth_combined: truth.combined.clone(),
        system,
        training,
        transmitted,
        boundary: truth.delay.boundary,
        frame_delay: m,
        noise_variance,
    })
}

fn run_eq_taps(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, RunError> {
    let tag = experiment_tag(cfg.id);
    let noise_variance = 10f64.powf(-cfg.loopback_snr_db / 10.0);
    let budgets = cfg.budget_grid.clone();
    let mut accs: Vec<Accumulator> = vec![Accumulator::default(); budgets.len()];
    let sparsity = cfg.frame.cir_memory + 1;

    for trial in 0..cfg.trials {
        let seed = derive_seed(cfg.base_seed, &[tag, trial as u64]);
        let mut rng = rng_from_seed(derive_seed(seed, &[3]));
        let delay = uniform_index(cfg.frame.block_len(), &mut rng);
        let lb = LoopbackConfig {
            frame: cfg.frame,
            oversampling: 4,
            rolloff: 0.5,
            span: 10,
            channel_index: 1,
            sample_delay: delay,
        };
        let inst = synthesize_loopback(&lb, noise_variance, seed)?;
        if let Some(prefix) = &cfg.iq_dump {
            let path = std::path::PathBuf::from(format!("{prefix}_trial{trial}.iq"));
            let noise = NoiseSpec::new(noise_variance, derive_seed(seed, &[7])).unwrap();
            write_iq_dump(&path, &inst.stream, &lb, &noise, seed)
                .map_err(|e| RunError(format!("IQ dump to {}: {e}", path.display())))?;
        }

        let start = Instant::now();
        let params = solver_params(Method::Omp, sparsity, noise_variance);
        let report = match omp(&inst.system, &params) {
            Ok(r) => r,
            Err(_) => {
                for acc in accs.iter_mut() {
                    acc.absorb(&TrialOutcome::Failed);
                }
                continue;
            }
        };
        let time_s = start.elapsed().as_secs_f64();
        let designs = match design_budget_sweep(
            &report.estimate,
            cfg.eq_num_taps,
            noise_variance,
            &budgets,
        ) {
            Ok(d) => d,
            Err(_) => {
                for acc in accs.iter_mut() {
                    acc.absorb(&TrialOutcome::Failed);
                }
                continue;
            }
        };
        let hit = boundary_hit(&report, &cfg.frame, inst.boundary);
        let channel_nmse = nmse(&report.estimate, &inst.truth_combined);
        for (bi, design) in designs.iter().enumerate() {
            match evaluate_symbol_mse(design, &inst.stream, &inst.transmitted) {
                Ok(mse) => accs[bi].absorb(&TrialOutcome::Ok {
                    mse,
                    nmse: channel_nmse,
                    time_s,
                    iterations: report.iterations,
                    boundary_hit: hit,
                }),
                Err(_) => accs[bi].absorb(&TrialOutcome::Failed),
            }
        }
    }

    let mut sorted = budgets.clone();
    sorted.sort_unstable();
    Ok(sorted
        .iter()
        .zip(accs.iter())
        .map(|(&b, acc)| acc.row(cfg, Method::Omp, "budget", b as f64))
        .collect())
}

fn run_loopback_index(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, RunError> {
    let tag = experiment_tag(cfg.id);
    let noise_variance = 10f64.powf(-cfg.loopback_snr_db / 10.0);
    let frame = cfg.frame;
    let mbar = frame.block_len();
    let sparsity = frame.cir_memory + 1;
    let mut rows = Vec::new();

    for (ii, &index) in cfg.loopback_indices.iter().enumerate() {
        let mut accs: Vec<Accumulator> = vec![Accumulator::default(); cfg.methods.len()];
        for trial in 0..cfg.trials {
            let seed = derive_seed(cfg.base_seed, &[tag, ii as u64, trial as u64]);
            // random delay whose boundary keeps the echo inside the model
            let mut rng = rng_from_seed(derive_seed(seed, &[3]));
            let max_boundary = (frame.data_len - 1).min(frame.combined_len() - 1 - index);
            let delay = loop {
                let d = uniform_index(mbar, &mut rng);
                if d % frame.data_len <= max_boundary {
                    break d;
                }
            };
            let lb = LoopbackConfig {
                frame,
                oversampling: 4,
                rolloff: 0.5,
                span: 10,
                channel_index: index,
                sample_delay: delay,
            };
            let inst = synthesize_loopback(&lb, noise_variance, seed)?;

            for (mi, &method) in cfg.methods.iter().enumerate() {
                accs[mi].absorb(&run_loopback_method(cfg, method, &inst, &frame, sparsity, mbar));
            }
        }
        for (mi, &method) in cfg.methods.iter().enumerate() {
            rows.push(accs[mi].row(cfg, method, "index", index as f64));
        }
    }
    Ok(rows)
}

fn run_loopback_method(
    cfg: &ExperimentConfig,
    method: Method,
    inst: &LoopbackInstance,
    frame: &FrameConfig,
    sparsity: usize,
    mbar: usize,
) -> TrialOutcome {
    let start = Instant::now();
    let params = solver_params(method, sparsity, inst.noise_variance);
    let report = match method {
        Method::Ideal => Ok(ideal_estimate(&inst.truth_combined)),
        Method::Omp => omp(&inst.system, &params),
        Method::Cosamp => cosamp(&inst.system, &params),
        Method::Classical => classical_jfsce(&inst.system),
        Method::Sbl => sbl(&inst.system, &params),
        Method::ReweightedL1 => reweighted_l1(&inst.system, &params),
        Method::Emgmamp => emgmamp(&inst.system, &params),
        Method::Conventional | Method::GenieConventional => {
            // locate the training frame over one whole block, then estimate
            // L+1 taps from the committed boundary
            let boundary = if method == Method::Conventional {
                match correlate_boundary(&inst.stream[mbar..], &inst.training, mbar) {
                    Ok(d_abs) => d_abs % frame.data_len,
                    Err(e) => return failed(e),
                }
            } else {
                inst.boundary
            };
            let window_start = mbar + inst.frame_delay * frame.data_len;
            let samples = &inst.stream[window_start..window_start + frame.training_len()];
            match build_conventional_system(&inst.training, samples, boundary, frame) {
                Ok(sys) => conventional_estimate(&sys, frame, method),
                Err(e) => return failed(e),
            }
        }
    };
    let report = match report {
        Ok(r) => r,
        Err(_) => return TrialOutcome::Failed,
    };
    let time_s = start.elapsed().as_secs_f64();
    let design = match design_mmse_equalizer(
        &report.estimate,
        cfg.eq_num_taps,
        inst.noise_variance,
        cfg.eq_budget,
    ) {
        Ok(d) => d,
        Err(_) => return TrialOutcome::Failed,
    };
    match evaluate_symbol_mse(&design, &inst.stream, &inst.transmitted) {
        Ok(mse) => TrialOutcome::Ok {
            mse,
            nmse: nmse(&report.estimate, &inst.truth_combined),
            time_s,
            iterations: report.iterations,
            boundary_hit: boundary_hit(&report, frame, inst.boundary),
        },
        Err(_) => TrialOutcome::Failed,
    }
}

fn failed(_e: jfsce_core::Error) -> TrialOutcome {
    TrialOutcome::Failed
}

/// Run every experiment in a config and write one CSV per experiment into
/// `out_dir`. Returns the written paths.
pub fn run_all(
    experiments: &[ExperimentConfig],
    out_dir: &std::path::Path,
) -> Result<Vec<std::path::PathBuf>, RunError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| RunError(format!("creating {}: {e}", out_dir.display())))?;
    let mut written = Vec::new();
    for cfg in experiments {
        let rows = run_experiment(cfg)?;
        let name = format!("{}.csv", cfg.id.name().replace('-', "_"));
        let path = out_dir.join(name);
        crate::csv::emit_csv(&rows, &path)
            .map_err(|e| RunError(format!("writing {}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}
