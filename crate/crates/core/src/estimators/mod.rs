//! Frame-sync / channel-estimation methods.
//!
//! Every estimator consumes a measurement system and returns the same report
//! shape: a combined-channel estimate of length `M + L`, so downstream
//! equalizer design does not care which method produced it. The conventional
//! path commits to a boundary first and estimates `L + 1` taps inside that
//! window; the joint methods recover the full sparse vector directly.

use std::time::Instant;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::CombinedChannel;

mod classical;
mod conventional;
mod cosamp;
mod emgmamp;
mod omp;
mod rl1;
mod sbl;

pub use classical::classical_jfsce;
pub use conventional::{conventional_estimate, correlate_boundary};
pub use cosamp::cosamp;
pub use emgmamp::{emgmamp, emgmamp_with_prior, GmComponent, GmPrior};
pub use omp::omp;
pub use rl1::reweighted_l1;
pub use sbl::{sbl, sbl_with_observer, SblState};

/// Estimator identifiers, used for dispatch and reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Conventional,
    GenieConventional,
    Classical,
    Omp,
    Cosamp,
    ReweightedL1,
    Sbl,
    Emgmamp,
    Ideal,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Conventional,
        Method::GenieConventional,
        Method::Classical,
        Method::Omp,
        Method::Cosamp,
        Method::ReweightedL1,
        Method::Sbl,
        Method::Emgmamp,
        Method::Ideal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Conventional => "conventional",
            Method::GenieConventional => "genie-conventional",
            Method::Classical => "classical",
            Method::Omp => "omp",
            Method::Cosamp => "cosamp",
            Method::ReweightedL1 => "rl1",
            Method::Sbl => "sbl",
            Method::Emgmamp => "emgmamp",
            Method::Ideal => "ideal",
        }
    }

    pub fn parse(name: &str) -> Option<Method> {
        Method::ALL.iter().copied().find(|m| m.name() == name)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Non-fatal conditions a solver wants to surface alongside its estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverFlag {
    /// Hit the iteration cap before meeting the tolerance.
    MaxIterations,
    /// Residual stopped improving; best iterate returned.
    Stagnated,
    /// A restricted system needed jitter regularization.
    Jittered,
    /// Iterations were restarted with heavier damping after divergence.
    Redamped,
    /// Fewer measurements than the method's comfortable regime.
    FewMeasurements,
}

/// Output of any estimation method.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    /// Combined-channel estimate, always `M + L` long.
    pub estimate: Vec<Complex64>,
    pub method: Method,
    /// Boundary committed by the conventional path; `None` for joint methods.
    pub boundary_estimate: Option<usize>,
    pub iterations: usize,
    /// Wall-clock seconds spent inside the estimator.
    pub wall_time: f64,
    /// Condition estimate of the solved system, where one was computed.
    pub condition: Option<f64>,
    pub flags: Vec<SolverFlag>,
}

impl EstimateReport {
    pub(crate) fn new(estimate: Vec<Complex64>, method: Method) -> Self {
        Self {
            estimate,
            method,
            boundary_estimate: None,
            iterations: 0,
            wall_time: 0.0,
            condition: None,
            flags: Vec::new(),
        }
    }

    /// Indices of the nonzero entries of the estimate.
    pub fn support(&self) -> Vec<usize> {
        self.estimate
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm_sqr() > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Parameters shared by the sparse solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    /// Sparsity budget `k`.
    pub sparsity: usize,
    /// Reweighted-l1 penalty; derived from the noise level when `None`.
    pub lambda: Option<f64>,
    /// Reweighting floor, relative to the first iterate's largest tap.
    pub epsilon_rel: f64,
    pub max_iter: usize,
    /// Stopping tolerance (residual fraction for greedy methods, parameter
    /// change for the iterative ones).
    pub tol: f64,
    /// Noise variance, assumed known to SBL / EMGMAMP / the lambda rule.
    pub noise_variance: f64,
    /// Inner iteration cap for the reweighted-l1 proximal solver.
    pub inner_max_iter: usize,
    /// Outer reweighting passes for reweighted-l1.
    pub reweight_iters: usize,
}

impl SolverParams {
    pub fn new(sparsity: usize, noise_variance: f64) -> Result<Self> {
        if sparsity == 0 {
            return Err(Error::InvalidParameter("sparsity budget k must be >= 1".into()));
        }
        if noise_variance < 0.0 {
            return Err(Error::InvalidParameter("noise variance must be >= 0".into()));
        }
        Ok(Self {
            sparsity,
            lambda: None,
            epsilon_rel: 1e-3,
            max_iter: 50,
            tol: 1e-4,
            noise_variance,
            inner_max_iter: 1000,
            reweight_iters: 5,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.sparsity == 0 {
            return Err(Error::InvalidParameter("sparsity budget k must be >= 1".into()));
        }
        if !(self.epsilon_rel > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be > 0".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be > 0".into()));
        }
        if let Some(l) = self.lambda {
            if l < 0.0 {
                return Err(Error::InvalidParameter("lambda must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Baseline that hands the true combined channel to the equalizer.
pub fn ideal_estimate(truth: &CombinedChannel) -> EstimateReport {
    let start = Instant::now();
    let mut report = EstimateReport::new(truth.taps().to_vec(), Method::Ideal);
    report.boundary_estimate = Some(truth.boundary());
    report.wall_time = start.elapsed().as_secs_f64();
    report
}

/// Read a frame boundary off a combined-channel estimate: the first index
/// whose magnitude reaches `threshold` times the peak, clipped to
/// `[0, M - 1]`.
pub fn derive_boundary(estimate: &[Complex64], data_len: usize, threshold: f64) -> Result<usize> {
    let peak = estimate.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::NoBoundary);
    }
    let cut = threshold * peak;
    let first = estimate
        .iter()
        .position(|v| v.norm() >= cut)
        .expect("peak exists");
    Ok(first.min(data_len - 1))
}

#[cfg(test)]
pub(crate) mod test_fixtures {
    use num_complex::Complex64;

    use crate::measurement::{build_measurement_system, MeasurementSystem};
    use crate::rng::derive_seed;
    use crate::signal::{
        build_combined_channel, channel_output, generate_qpsk, reference_cir, FrameConfig,
        NoiseSpec,
    };

    /// Noiseless paper-scale instance: the reference channel at boundary 500
    /// inside M = 1000, L = 100, NE = 148. Returns the system, the true
    /// combined taps, and their support.
    pub(crate) fn reference_noiseless_system() -> (MeasurementSystem, Vec<Complex64>, Vec<usize>) {
        let cfg = FrameConfig::new(1000, 100, 148, 10).unwrap();
        let training = generate_qpsk(cfg.training_len(), derive_seed(2024, &[1]));
        let history = generate_qpsk(cfg.combined_len() - 1, derive_seed(2024, &[2]));
        let combined = build_combined_channel(&reference_cir(), 500, cfg.data_len).unwrap();
        let window = channel_output(&training, &history, &combined, &NoiseSpec::noiseless(0));
        let sys = build_measurement_system(&training, &window, &cfg).unwrap();
        (sys, combined.taps().to_vec(), combined.support().to_vec())
    }

    /// Same instance with AWGN of the given variance added to the window.
    pub(crate) fn reference_noisy_system(variance: f64, seed: u64) -> (MeasurementSystem, Vec<Complex64>) {
        let (mut sys, truth, _) = reference_noiseless_system();
        let mut rng = crate::rng::rng_from_seed(seed);
        let z = crate::rng::complex_gaussian(sys.received.len(), variance, &mut rng);
        for (r, zi) in sys.received.iter_mut().zip(z) {
            *r += zi;
        }
        (sys, truth)
    }
}
