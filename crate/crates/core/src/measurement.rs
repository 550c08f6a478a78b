//! Measurement construction: the linear system `y = X h + z` relating the
//! tail of a received training frame to the combined channel, plus the
//! reduced system used by the conventional (correlate-then-estimate) method.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::signal::FrameConfig;

/// The full measurement system over the combined channel: `NE` equations in
/// `M + L` unknowns.
#[derive(Debug, Clone)]
pub struct MeasurementSystem {
    /// Received vector, newest training-frame sample first (`NE` entries).
    pub received: Vec<Complex64>,
    /// `NE x (M + L)` training matrix.
    pub matrix: CMat,
    /// The known training symbols (`M + L + NE - 1` of them).
    pub training: Vec<Complex64>,
    pub config: FrameConfig,
}

/// Reduced system used by the conventional method after a boundary estimate
/// has been committed: `NE` equations in `L + 1` unknowns.
#[derive(Debug, Clone)]
pub struct ConventionalSystem {
    pub received: Vec<Complex64>,
    /// `NE x (L + 1)` matrix; equal to columns `boundary..boundary+L+1` of
    /// the full training matrix.
    pub matrix: CMat,
    pub boundary_estimate: usize,
    pub config: FrameConfig,
}

/// Training matrix with entry `(r, c) = training[Mt - 1 - r - c]` where
/// `Mt = M + L + NE - 1`. Row `r` is the equation for received sample
/// `Mt - 1 - r`; the entry depends on `r + c` only, so the matrix is Hankel
/// along antidiagonals.
pub fn build_training_matrix(training: &[Complex64], cfg: &FrameConfig) -> Result<CMat> {
    let mt = cfg.training_len();
    if training.len() != mt {
        return Err(Error::DimensionMismatch {
            context: "training frame must have length M + L + NE - 1",
            expected: mt,
            actual: training.len(),
        });
    }
    let ne = cfg.num_equations;
    let n = cfg.combined_len();
    Ok(CMat::from_fn(ne, n, |r, c| training[mt - 1 - r - c]))
}

/// The last `NE` received samples of a training frame, newest first.
pub fn collect_received_vector(samples: &[Complex64], cfg: &FrameConfig) -> Result<Vec<Complex64>> {
    let mt = cfg.training_len();
    if samples.len() != mt {
        return Err(Error::DimensionMismatch {
            context: "training-frame sample window must have length M + L + NE - 1",
            expected: mt,
            actual: samples.len(),
        });
    }
    let ne = cfg.num_equations;
    Ok((0..ne).map(|r| samples[mt - 1 - r]).collect())
}

/// Convenience: received vector plus training matrix in one system.
pub fn build_measurement_system(
    training: &[Complex64],
    samples: &[Complex64],
    cfg: &FrameConfig,
) -> Result<MeasurementSystem> {
    Ok(MeasurementSystem {
        received: collect_received_vector(samples, cfg)?,
        matrix: build_training_matrix(training, cfg)?,
        training: training.to_vec(),
        config: *cfg,
    })
}

/// Reduced `NE x (L + 1)` training matrix for a committed boundary estimate:
/// entry `(r, c) = training[Mt - boundary - 1 - r - c]`, i.e. columns
/// `boundary..boundary+L+1` of the full matrix.
pub fn build_conventional_matrix(
    training: &[Complex64],
    boundary_estimate: usize,
    cfg: &FrameConfig,
) -> Result<CMat> {
    if boundary_estimate >= cfg.data_len {
        return Err(Error::BoundaryOutOfRange {
            boundary: boundary_estimate,
            data_len: cfg.data_len,
        });
    }
    let mt = cfg.training_len();
    if training.len() != mt {
        return Err(Error::DimensionMismatch {
            context: "training frame must have length M + L + NE - 1",
            expected: mt,
            actual: training.len(),
        });
    }
    let ne = cfg.num_equations;
    let taps = cfg.cir_memory + 1;
    Ok(CMat::from_fn(ne, taps, |r, c| {
        training[mt - boundary_estimate - 1 - r - c]
    }))
}

pub fn build_conventional_system(
    training: &[Complex64],
    samples: &[Complex64],
    boundary_estimate: usize,
    cfg: &FrameConfig,
) -> Result<ConventionalSystem> {
    Ok(ConventionalSystem {
        received: collect_received_vector(samples, cfg)?,
        matrix: build_conventional_matrix(training, boundary_estimate, cfg)?,
        boundary_estimate,
        config: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{
        build_combined_channel, channel_output, generate_qpsk, reference_cir_small, NoiseSpec,
    };

    #[test]
    fn paper_scale_dimensions() {
        let cfg = FrameConfig::new(1000, 100, 148, 10).unwrap();
        let training = generate_qpsk(cfg.training_len(), 3);
        assert_eq!(training.len(), 1247);
        let x = build_training_matrix(&training, &cfg).unwrap();
        assert_eq!((x.rows(), x.cols()), (148, 1100));
        // corner entries per the antidiagonal layout
        assert_eq!(x.get(0, 0), training[1246]);
        assert_eq!(x.get(147, 1099), training[0]);
        assert_eq!(x.get(0, 1099), training[147]); // NE - 1
    }

    #[test]
    fn hand_unrolled_two_by_two() {
        let cfg = FrameConfig::new(2, 0, 2, 1).unwrap();
        let training = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(3.0, 0.0),
        ];
        let x = build_training_matrix(&training, &cfg).unwrap();
        // rows: [c, b], [b, a]
        assert_eq!(x.get(0, 0).re, 3.0);
        assert_eq!(x.get(0, 1).re, 2.0);
        assert_eq!(x.get(1, 0).re, 2.0);
        assert_eq!(x.get(1, 1).re, 1.0);
    }

    #[test]
    fn wrong_training_length_is_rejected() {
        let cfg = FrameConfig::new(4, 1, 2, 1).unwrap();
        let training = generate_qpsk(5, 0); // needs 4 + 1 + 2 - 1 = 6
        let err = build_training_matrix(&training, &cfg).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 6, .. }));
        assert!(err.to_string().contains("M + L + NE - 1"));
    }

    #[test]
    fn received_vector_is_tail_reversed() {
        let cfg = FrameConfig::new(2, 2, 2, 1).unwrap(); // Mt = 5
        let samples: Vec<Complex64> = (0..5).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let y = collect_received_vector(&samples, &cfg).unwrap();
        assert_eq!(y.len(), 2);
        assert_eq!(y[0].re, 4.0);
        assert_eq!(y[1].re, 3.0);
    }

    #[test]
    fn received_vector_full_window_case() {
        // NE = Mt happens when M + L = 1, i.e. M = 1, L = 0
        let cfg = FrameConfig::new(1, 0, 4, 1).unwrap();
        assert_eq!(cfg.training_len(), 4);
        let samples: Vec<Complex64> = (0..4).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let y = collect_received_vector(&samples, &cfg).unwrap();
        let got: Vec<f64> = y.iter().map(|v| v.re).collect();
        assert_eq!(got, vec![3.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn system_is_consistent_with_channel_output() {
        // noiseless: X h = collected tail of the received training window,
        // with channel_output as the independent oracle for the right side
        let cfg = FrameConfig::new(60, 20, 25, 4).unwrap();
        let training = generate_qpsk(cfg.training_len(), 77);
        let h = reference_cir_small();
        let boundary = 41;
        let combined = build_combined_channel(&h, boundary, cfg.data_len).unwrap();
        let history = generate_qpsk(cfg.combined_len() - 1, 78);
        let window = channel_output(&training, &history, &combined, &NoiseSpec::noiseless(0));
        let sys = build_measurement_system(&training, &window, &cfg).unwrap();
        let predicted = sys.matrix.matvec(combined.taps());
        let max_dev = predicted
            .iter()
            .zip(&sys.received)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-12, "max deviation {max_dev}");
    }

    #[test]
    fn conventional_matrix_is_column_block_of_full() {
        let cfg = FrameConfig::new(30, 6, 12, 2).unwrap();
        let training = generate_qpsk(cfg.training_len(), 5);
        let full = build_training_matrix(&training, &cfg).unwrap();
        for boundary in [0usize, 7, 29] {
            let reduced = build_conventional_matrix(&training, boundary, &cfg).unwrap();
            let block = full.column_block(boundary, boundary + cfg.cir_memory + 1);
            assert_eq!(reduced.max_abs_diff(&block), 0.0, "boundary {boundary}");
        }
    }

    #[test]
    fn conventional_boundary_edges_match_named_blocks() {
        let cfg = FrameConfig::new(10, 3, 5, 2).unwrap();
        let training = generate_qpsk(cfg.training_len(), 9);
        let full = build_training_matrix(&training, &cfg).unwrap();
        let first = build_conventional_matrix(&training, 0, &cfg).unwrap();
        assert_eq!(first.max_abs_diff(&full.column_block(0, 4)), 0.0);
        let last = build_conventional_matrix(&training, 9, &cfg).unwrap();
        assert_eq!(last.max_abs_diff(&full.column_block(9, 13)), 0.0);
        assert!(build_conventional_matrix(&training, 10, &cfg).is_err());
    }

    #[test]
    fn hankel_entries_depend_on_antidiagonal_only() {
        let cfg = FrameConfig::new(12, 4, 6, 2).unwrap();
        let training = generate_qpsk(cfg.training_len(), 21);
        let x = build_training_matrix(&training, &cfg).unwrap();
        for r in 0..x.rows() {
            for c in 0..x.cols() {
                let s = r + c;
                // compare against the (0, s) or (s - cols + 1, ...) representative
                let (rr, cc) = if s < x.cols() { (0, s) } else { (s - x.cols() + 1, x.cols() - 1) };
                assert_eq!(x.get(r, c), x.get(rr, cc));
            }
        }
    }
}
