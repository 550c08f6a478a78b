//! Conventional method: cross-correlate for the frame boundary, then
//! least-squares estimate the `L + 1` taps inside the committed window.

use std::time::Instant;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{condition_hermitian, dot_conj, Cholesky};
use crate::measurement::ConventionalSystem;
use crate::signal::FrameConfig;

use super::{EstimateReport, Method};

/// Boundary estimate via cross-correlation: the lag `d` in `[0, M - 1]`
/// maximizing `|sum_n received(n + d) conj(training(n))|`, lowest lag on
/// ties. Lags whose window runs past the received samples are evaluated on
/// the available overlap.
pub fn correlate_boundary(
    received: &[Complex64],
    training: &[Complex64],
    data_len: usize,
) -> Result<usize> {
    if received.len() < training.len() {
        return Err(Error::InsufficientSamples {
            needed: training.len(),
            got: received.len(),
        });
    }
    let mut best = 0usize;
    let mut best_mag = -1.0f64;
    for d in 0..data_len {
        if d >= received.len() {
            break;
        }
        let span = training.len().min(received.len() - d);
        let corr = dot_conj(&training[..span], &received[d..d + span]);
        let mag = corr.norm();
        if mag > best_mag {
            best_mag = mag;
            best = d;
        }
    }
    Ok(best)
}

/// Least-squares tap estimate inside the committed boundary window, embedded
/// back into a full-length combined-channel vector.
///
/// `method` selects the label: `Conventional` when the boundary came from
/// correlation, `GenieConventional` when the true boundary was supplied.
pub fn conventional_estimate(
    system: &ConventionalSystem,
    cfg: &FrameConfig,
    method: Method,
) -> Result<EstimateReport> {
    assert!(
        matches!(method, Method::Conventional | Method::GenieConventional),
        "conventional estimator labelled with {method}"
    );
    let start = Instant::now();
    let taps = cfg.cir_memory + 1;
    if system.matrix.rows() < taps {
        return Err(Error::IllConditioned {
            condition: f64::INFINITY,
        });
    }
    let gram = system.matrix.gram();
    let chol = match Cholesky::new(&gram) {
        Ok(c) => c,
        Err(_) => {
            return Err(Error::IllConditioned {
                condition: condition_hermitian(&gram, 40),
            })
        }
    };
    let cond = chol.diag_ratio();
    if !cond.is_finite() || cond > 1e14 {
        return Err(Error::IllConditioned {
            condition: condition_hermitian(&gram, 40),
        });
    }
    let rhs = system.matrix.adjoint_matvec(&system.received);
    let h = chol.solve(&rhs);

    let mut estimate = vec![Complex64::new(0.0, 0.0); cfg.combined_len()];
    estimate[system.boundary_estimate..system.boundary_estimate + taps].copy_from_slice(&h);

    let mut report = EstimateReport::new(estimate, method);
    report.boundary_estimate = Some(system.boundary_estimate);
    report.iterations = 1;
    report.condition = Some(cond.sqrt());
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}
