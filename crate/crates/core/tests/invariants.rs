//! Property tests over the structural invariants of the signal model and
//! the measurement construction.

use num_complex::Complex64;
use proptest::prelude::*;

use jfsce_core::measurement::{
    build_conventional_matrix, build_measurement_system, build_training_matrix,
};
use jfsce_core::signal::{
    build_combined_channel, channel_output, generate_qpsk, Cir, FrameConfig, NoiseSpec,
};

fn arb_cir() -> impl Strategy<Value = Cir> {
    (1usize..12, any::<u64>()).prop_map(|(len, seed)| {
        let syms = generate_qpsk(len, seed);
        // sprinkle zeros so sparsity varies
        let taps: Vec<Complex64> = syms
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                if i > 0 && (seed >> (i % 60)) & 1 == 0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    s
                }
            })
            .collect();
        Cir::new(taps).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn combined_channel_has_fixed_length_and_preserved_sparsity(
        h in arb_cir(),
        boundary_frac in 0.0f64..1.0,
        m in 16usize..64,
    ) {
        let boundary = ((m - 1) as f64 * boundary_frac) as usize;
        let combined = build_combined_channel(&h, boundary, m).unwrap();
        prop_assert_eq!(combined.len(), m + h.memory());
        prop_assert_eq!(combined.support().len(), h.sparsity());
        for &s in combined.support() {
            prop_assert!(s >= boundary && s <= boundary + h.memory());
        }
    }

    #[test]
    fn zero_noise_output_equals_direct_convolution(
        h in arb_cir(),
        seed in any::<u64>(),
        boundary in 0usize..16,
    ) {
        let m = 16usize;
        let combined = build_combined_channel(&h, boundary.min(m - 1), m).unwrap();
        let x = generate_qpsk(48, seed);
        let history = generate_qpsk(combined.len() - 1, seed ^ 0xabcd);
        let y = channel_output(&x, &history, &combined, &NoiseSpec::noiseless(0));
        // direct evaluation from the short CIR and the boundary
        let fetch = |idx: isize| -> Complex64 {
            if idx >= 0 {
                x[idx as usize]
            } else {
                history[(history.len() as isize + idx) as usize]
            }
        };
        for (n, yn) in y.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (l, hl) in h.taps().iter().enumerate() {
                acc += hl * fetch(n as isize - combined.boundary() as isize - l as isize);
            }
            prop_assert!((yn - acc).norm() < 1e-12);
        }
    }

    #[test]
    fn training_matrix_is_hankel_and_conventional_is_a_column_block(
        m in 4usize..24,
        l in 0usize..6,
        ne in 2usize..10,
        seed in any::<u64>(),
        boundary_frac in 0.0f64..1.0,
    ) {
        let cfg = FrameConfig::new(m, l, ne, 2).unwrap();
        let training = generate_qpsk(cfg.training_len(), seed);
        let full = build_training_matrix(&training, &cfg).unwrap();
        // Hankel: entries depend on r + c only
        for r in 1..full.rows() {
            for c in 0..full.cols() - 1 {
                prop_assert_eq!(full.get(r, c), full.get(r - 1, c + 1));
            }
        }
        let boundary = ((m - 1) as f64 * boundary_frac) as usize;
        let reduced = build_conventional_matrix(&training, boundary, &cfg).unwrap();
        for r in 0..reduced.rows() {
            for c in 0..reduced.cols() {
                prop_assert_eq!(reduced.get(r, c), full.get(r, boundary + c));
            }
        }
    }

    #[test]
    fn linear_system_is_consistent_at_zero_noise(
        h in arb_cir(),
        seed in any::<u64>(),
        boundary in 0usize..20,
    ) {
        let m = 20usize;
        let cfg = FrameConfig::new(m, h.memory(), 8, 2).unwrap();
        let combined = build_combined_channel(&h, boundary.min(m - 1), m).unwrap();
        let training = generate_qpsk(cfg.training_len(), seed);
        let history = generate_qpsk(combined.len() - 1, seed ^ 0x1234);
        let window = channel_output(&training, &history, &combined, &NoiseSpec::noiseless(0));
        let sys = build_measurement_system(&training, &window, &cfg).unwrap();
        let predicted = sys.matrix.matvec(combined.taps());
        for (p, y) in predicted.iter().zip(&sys.received) {
            prop_assert!((p - y).norm() < 1e-12);
        }
    }
}
