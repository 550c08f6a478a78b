//! Sparse Bayesian learning.
//!
//! Gaussian prior `h_i ~ CN(0, gamma_i)` with per-coefficient variances
//! learned by EM. E-step: posterior covariance
//! `Sigma = (Gamma^{-1} + X^H X / sigma^2)^{-1}` and mean
//! `mu = Sigma X^H y / sigma^2`. M-step: `gamma_i <- |mu_i|^2 + Sigma_ii`.
//! Coefficients whose variance collapses are dropped from the working set;
//! the EM fixed point for an irrelevant coefficient is zero, so this only
//! skips arithmetic the iteration would waste.

use std::time::Instant;

use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::{CMat, Cholesky};
use crate::measurement::MeasurementSystem;

use super::{EstimateReport, Method, SolverFlag, SolverParams};

/// Posterior snapshot handed to an iteration observer.
#[derive(Debug, Clone)]
pub struct SblState {
    /// Prior variances, full length `M + L` (zero once pruned).
    pub gamma: Vec<f64>,
    /// Posterior mean, full length.
    pub mean: Vec<Complex64>,
    /// Posterior covariance, full size with zero rows/columns for pruned
    /// coefficients.
    pub covariance: CMat,
}

const NOISE_FLOOR: f64 = 1e-12;
const WORKING_SET_CUT: f64 = 1e-12;
const OUTPUT_PRUNE: f64 = 1e-6;

pub fn sbl(system: &MeasurementSystem, params: &SolverParams) -> Result<EstimateReport> {
    run(system, params, None)
}

/// SBL with a per-iteration callback, for convergence diagnostics. The full
/// posterior covariance is materialized for the observer, so keep this to
/// small problems.
pub fn sbl_with_observer(
    system: &MeasurementSystem,
    params: &SolverParams,
    mut observer: impl FnMut(&SblState),
) -> Result<EstimateReport> {
    run(system, params, Some(&mut observer))
}

fn run(
    system: &MeasurementSystem,
    params: &SolverParams,
    mut observer: Option<&mut dyn FnMut(&SblState)>,
) -> Result<EstimateReport> {
    params.validate()?;
    let x = &system.matrix;
    let y = &system.received;
    let n = x.cols();
    let start = Instant::now();
    let sigma_sqr = params.noise_variance.max(NOISE_FLOOR);

    // fixed across iterations
    let gram = x.gram();
    let xhy = x.adjoint_matvec(y);

    // matched-filter initialization: coefficients the data does not ask for
    // start at the noise level instead of unity, which saves dozens of EM
    // iterations spent deflating them
    let mut gamma: Vec<f64> = (0..n)
        .map(|i| {
            let col_energy = gram.get(i, i).re.max(1e-30);
            (xhy[i].norm_sqr() / (col_energy * col_energy)).max(1e-10)
        })
        .collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut mean = vec![Complex64::new(0.0, 0.0); n];
    let mut flags = Vec::new();
    let mut iterations = 0usize;
    let mut converged = false;

    for _ in 0..params.max_iter {
        iterations += 1;
        let a = active.len();
        if a == 0 {
            converged = true;
            break;
        }
        // A = Gamma^{-1} + X^H X / sigma^2 restricted to the working set
        let mut sys_mat = CMat::zeros(a, a);
        for (ri, &gi) in active.iter().enumerate() {
            for (ci, &gj) in active.iter().enumerate() {
                sys_mat.set(ri, ci, gram.get(gi, gj) / sigma_sqr);
            }
            let d = sys_mat.get(ri, ri);
            sys_mat.set(ri, ri, d + Complex64::new(1.0 / gamma[active[ri]], 0.0));
        }
        let (chol, jitter) = Cholesky::new_with_jitter(&sys_mat);
        if jitter > 0.0 && !flags.contains(&SolverFlag::Jittered) {
            flags.push(SolverFlag::Jittered);
        }
        let rhs: Vec<Complex64> = active.iter().map(|&i| xhy[i] / sigma_sqr).collect();
        let mu_act = chol.solve(&rhs);
        let cov_diag_act = chol.inverse_diagonal();

        if let Some(obs) = observer.as_deref_mut() {
            let mut full_mean = vec![Complex64::new(0.0, 0.0); n];
            let mut covariance = CMat::zeros(n, n);
            let cov_act = invert_from_cholesky(&chol);
            for (ri, &gi) in active.iter().enumerate() {
                full_mean[gi] = mu_act[ri];
                for (ci, &gj) in active.iter().enumerate() {
                    covariance.set(gi, gj, cov_act.get(ri, ci));
                }
            }
            obs(&SblState {
                gamma: gamma.clone(),
                mean: full_mean,
                covariance,
            });
        }

        // M-step and convergence bookkeeping
        let mut max_change = 0.0f64;
        for (ri, &gi) in active.iter().enumerate() {
            let new_gamma = mu_act[ri].norm_sqr() + cov_diag_act[ri];
            max_change = max_change.max((new_gamma - gamma[gi]).abs());
            gamma[gi] = new_gamma;
            mean[gi] = mu_act[ri];
        }

        // shrink the working set: collapsed variances stay collapsed
        let peak = gamma.iter().cloned().fold(0.0, f64::max);
        let cut = WORKING_SET_CUT * peak;
        let before = active.len();
        active.retain(|&i| gamma[i] >= cut);
        if active.len() != before {
            for i in 0..n {
                if gamma[i] < cut {
                    gamma[i] = 0.0;
                    mean[i] = Complex64::new(0.0, 0.0);
                }
            }
        }

        if max_change < params.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        flags.push(SolverFlag::MaxIterations);
    }

    // output pruning: near-zero variances would otherwise leak tiny taps
    // into the sparse equalizer
    let peak = gamma.iter().cloned().fold(0.0, f64::max);
    let mut estimate = mean;
    for (e, g) in estimate.iter_mut().zip(&gamma) {
        if *g < OUTPUT_PRUNE * peak {
            *e = Complex64::new(0.0, 0.0);
        }
    }

    let mut report = EstimateReport::new(estimate, Method::Sbl);
    report.iterations = iterations;
    report.flags = flags;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Dense inverse from a Cholesky factor (observer path only).
fn invert_from_cholesky(chol: &Cholesky) -> CMat {
    let n = chol.dim();
    let mut inv = CMat::zeros(n, n);
    for i in 0..n {
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        e[i] = Complex64::new(1.0, 0.0);
        let col = chol.solve(&e);
        for r in 0..n {
            inv.set(r, i, col[r]);
        }
    }
    inv
}
