//! Classical joint estimate: pseudo-inverse of the full training matrix.
//!
//! For a wide system (`NE < M + L`) this is the minimum-norm solution
//! `X^H (X X^H)^{-1} y`; for a tall system the ordinary least-squares
//! solution `(X^H X)^{-1} X^H y`. Neither exploits sparsity.

use std::time::Instant;

use crate::error::Result;
use crate::linalg::Cholesky;
use crate::measurement::MeasurementSystem;

use super::{EstimateReport, Method, SolverFlag};

pub fn classical_jfsce(system: &MeasurementSystem) -> Result<EstimateReport> {
    let start = Instant::now();
    let x = &system.matrix;
    let wide = x.rows() < x.cols();
    let gram = if wide { x.outer_gram() } else { x.gram() };
    let (chol, jitter) = Cholesky::new_with_jitter(&gram);
    let estimate = if wide {
        let alpha = chol.solve(&system.received);
        x.adjoint_matvec(&alpha)
    } else {
        let rhs = x.adjoint_matvec(&system.received);
        chol.solve(&rhs)
    };
    let mut report = EstimateReport::new(estimate, Method::Classical);
    report.iterations = 1;
    report.condition = Some(chol.diag_ratio().sqrt());
    if jitter > 0.0 {
        report.flags.push(SolverFlag::Jittered);
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    use crate::linalg::{dot_conj, norm2, norm2_sqr, CMat};
    use crate::measurement::build_measurement_system;
    use crate::rng::derive_seed;
    use crate::signal::{
        build_combined_channel, channel_output, generate_qpsk, reference_cir_small, FrameConfig,
        NoiseSpec,
    };

    fn noiseless_system(cfg: &FrameConfig, boundary: usize, seed: u64) -> (MeasurementSystem, Vec<Complex64>) {
        let h = reference_cir_small();
        let training = generate_qpsk(cfg.training_len(), derive_seed(seed, &[1]));
        let history = generate_qpsk(cfg.combined_len() - 1, derive_seed(seed, &[2]));
        let combined = build_combined_channel(&h, boundary, cfg.data_len).unwrap();
        let window = channel_output(&training, &history, &combined, &NoiseSpec::noiseless(0));
        let sys = build_measurement_system(&training, &window, cfg).unwrap();
        (sys, combined.taps().to_vec())
    }

    #[test]
    fn determined_noiseless_system_recovers_exactly() {
        // NE >= M + L: ordinary least squares, exact at zero noise
        let cfg = FrameConfig::new(40, 20, 70, 2).unwrap();
        let (sys, truth) = noiseless_system(&cfg, 11, 5);
        let report = classical_jfsce(&sys).unwrap();
        let err = report
            .estimate
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / norm2(&truth);
        assert!(err < 1e-8, "relative error {err}");
    }

    /// Modified Gram-Schmidt orthonormal basis for the span of the columns
    /// of `X^H` (the conjugated rows), which is where every minimum-norm
    /// solution lives. Kept independent of the solver path it is checking.
    fn mgs_row_basis(x: &CMat) -> Vec<Vec<Complex64>> {
        let mut basis: Vec<Vec<Complex64>> = Vec::new();
        for r in 0..x.rows() {
            let mut v: Vec<Complex64> = x.row(r).iter().map(|z| z.conj()).collect();
            for q in &basis {
                let proj = dot_conj(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
            let n = norm2(&v);
            if n > 1e-10 {
                for vi in v.iter_mut() {
                    *vi /= n;
                }
                basis.push(v);
            }
        }
        basis
    }

    #[test]
    fn underdetermined_solution_is_minimum_norm_and_consistent() {
        let cfg = FrameConfig::new(100, 20, 40, 4).unwrap();
        let (sys, truth) = noiseless_system(&cfg, 37, 9);
        let report = classical_jfsce(&sys).unwrap();

        // consistency: X h = y exactly at zero noise
        let recon = sys.matrix.matvec(&report.estimate);
        let resid: f64 = recon
            .iter()
            .zip(&sys.received)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(resid < 1e-10, "residual {resid}");

        // the truth is one consistent solution, so minimum norm can't exceed it
        assert!(norm2_sqr(&report.estimate) <= norm2_sqr(&truth) + 1e-9);

        // minimum-norm oracle: the solution must lie in the row space of X
        let basis = mgs_row_basis(&sys.matrix);
        let mut projected = vec![Complex64::new(0.0, 0.0); report.estimate.len()];
        for q in &basis {
            let coef = dot_conj(q, &report.estimate);
            for (p, qi) in projected.iter_mut().zip(q) {
                *p += coef * qi;
            }
        }
        let out_of_row_space: f64 = report
            .estimate
            .iter()
            .zip(&projected)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(out_of_row_space < 1e-9, "row-space deviation {out_of_row_space}");
    }

    #[test]
    fn underdetermined_solution_is_dense() {
        let cfg = FrameConfig::new(100, 20, 40, 4).unwrap();
        let (sys, _) = noiseless_system(&cfg, 37, 13);
        let report = classical_jfsce(&sys).unwrap();
        let nonzero = report
            .estimate
            .iter()
            .filter(|v| v.norm() > 1e-9)
            .count();
        assert!(
            nonzero > cfg.combined_len() / 2,
            "expected a dense estimate, {nonzero} nonzeros"
        );
    }
}
