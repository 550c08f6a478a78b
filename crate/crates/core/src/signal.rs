//! Signal model: frames, channels, delays, and the forward model that turns
//! transmitted symbols into received samples.
//!
//! The combined channel stacks an unknown frame-boundary offset and the
//! physical CIR into one sparse vector of fixed length `M + L`, so joint
//! frame synchronization and channel estimation reduces to recovering that
//! vector.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rng::{complex_gaussian, rng_from_seed};

/// Frame geometry shared by transmitter and receiver.
///
/// `training_len()` is pinned to `M + L + NE - 1`, the shortest training
/// frame for which every measurement equation touches only known symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameConfig {
    /// Data-frame length in symbols (`M`).
    pub data_len: usize,
    /// CIR memory (`L`); the physical channel has `L + 1` taps.
    pub cir_memory: usize,
    /// Number of measurement equations (`NE`).
    pub num_equations: usize,
    /// Training period in frames (`P`): one training frame every `P` frames.
    pub training_period: usize,
}

impl FrameConfig {
    pub fn new(
        data_len: usize,
        cir_memory: usize,
        num_equations: usize,
        training_period: usize,
    ) -> Result<Self> {
        if data_len == 0 {
            return Err(Error::InvalidParameter("data-frame length M must be >= 1".into()));
        }
        if num_equations == 0 {
            return Err(Error::InvalidParameter("equation count NE must be >= 1".into()));
        }
        if training_period == 0 {
            return Err(Error::InvalidParameter("training period P must be >= 1".into()));
        }
        Ok(Self {
            data_len,
            cir_memory,
            num_equations,
            training_period,
        })
    }

    /// Training-frame length: `M + L + NE - 1`.
    pub fn training_len(&self) -> usize {
        self.data_len + self.cir_memory + self.num_equations - 1
    }

    /// Combined-channel length: `M + L`.
    pub fn combined_len(&self) -> usize {
        self.data_len + self.cir_memory
    }

    /// Repetition block for the loopback frontend: `(P-1) M + training_len`.
    pub fn block_len(&self) -> usize {
        (self.training_period - 1) * self.data_len + self.training_len()
    }
}

/// Physical channel impulse response, `L + 1` symbol-spaced taps.
#[derive(Debug, Clone, PartialEq)]
pub struct Cir {
    taps: Vec<Complex64>,
}

impl Cir {
    pub fn new(taps: Vec<Complex64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidParameter("CIR needs at least one tap".into()));
        }
        Ok(Self { taps })
    }

    pub fn from_real(taps: &[f64]) -> Self {
        Self {
            taps: taps.iter().map(|&t| Complex64::new(t, 0.0)).collect(),
        }
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    /// Channel memory `L` (number of taps minus one).
    pub fn memory(&self) -> usize {
        self.taps.len() - 1
    }

    /// Number of nonzero taps.
    pub fn sparsity(&self) -> usize {
        self.taps.iter().filter(|t| t.norm_sqr() > 0.0).count()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }
}

/// Ten-tap sparse multipath channel with memory 100 used as the default
/// simulation channel: the strongest tap sits at delay 14, not at the front,
/// which is exactly the shape that defeats correlation-only synchronization.
pub fn reference_cir() -> Cir {
    let mut taps = vec![0.0; 101];
    for &(idx, amp) in REFERENCE_TAPS {
        taps[idx] = amp;
    }
    Cir::from_real(&taps)
}

const REFERENCE_TAPS: &[(usize, f64)] = &[
    (0, -0.5),
    (7, 0.1),
    (14, 0.9),
    (33, -0.3),
    (49, 0.5),
    (51, -0.25),
    (69, -0.3),
    (73, 0.3),
    (89, 0.4),
    (100, -0.1),
];

/// Memory-20 analog of [`reference_cir`] for the small "desk-scale" preset:
/// same amplitudes, compressed delays, strongest tap still off the front.
pub fn reference_cir_small() -> Cir {
    let pairs: &[(usize, f64)] = &[
        (0, -0.5),
        (1, 0.1),
        (3, 0.9),
        (7, -0.3),
        (10, 0.5),
        (11, -0.25),
        (14, -0.3),
        (15, 0.3),
        (18, 0.4),
        (20, -0.1),
    ];
    let mut taps = vec![0.0; 21];
    for &(idx, amp) in pairs {
        taps[idx] = amp;
    }
    Cir::from_real(&taps)
}

/// Decomposition of a total sample delay `D` into a frame part and the
/// in-frame boundary offset: `D = m*M + boundary`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayModel {
    pub total: usize,
    pub frame: usize,
    pub boundary: usize,
}

impl DelayModel {
    pub fn from_total(total: usize, data_len: usize) -> Self {
        Self {
            total,
            frame: total / data_len,
            boundary: total % data_len,
        }
    }
}

/// Delayed, zero-padded combined channel of length `M + L`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedChannel {
    taps: Vec<Complex64>,
    boundary: usize,
    support: Vec<usize>,
}

impl CombinedChannel {
    /// Build directly from a full-length tap vector (used by the loopback
    /// frontend, whose ground truth is not a clean shift of a short CIR).
    pub fn from_taps(taps: Vec<Complex64>, boundary: usize) -> Self {
        let support = taps
            .iter()
            .enumerate()
            .filter(|(_, t)| t.norm_sqr() > 0.0)
            .map(|(i, _)| i)
            .collect();
        Self {
            taps,
            boundary,
            support,
        }
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn boundary(&self) -> usize {
        self.boundary
    }

    /// Sorted indices of the nonzero taps.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }
}

/// Embed a CIR at frame-boundary offset `boundary` into a combined channel of
/// length `M + L`: `boundary` leading zeros, the CIR, `M - boundary - 1`
/// trailing zeros.
pub fn build_combined_channel(h: &Cir, boundary: usize, data_len: usize) -> Result<CombinedChannel> {
    if boundary >= data_len {
        return Err(Error::BoundaryOutOfRange {
            boundary,
            data_len,
        });
    }
    let len = data_len + h.memory();
    let mut taps = vec![Complex64::new(0.0, 0.0); len];
    taps[boundary..boundary + h.taps().len()].copy_from_slice(h.taps());
    Ok(CombinedChannel::from_taps(taps, boundary))
}

/// Additive white Gaussian noise description. `variance` is the total
/// per-sample complex variance; SNR for unit-energy symbols is `1/variance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub variance: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(variance: f64, seed: u64) -> Result<Self> {
        if variance < 0.0 || !variance.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be finite and >= 0, got {variance}"
            )));
        }
        Ok(Self { variance, seed })
    }

    pub fn noiseless(seed: u64) -> Self {
        Self {
            variance: 0.0,
            seed,
        }
    }

    /// Noise variance for a target SNR in dB, assuming unit-energy symbols.
    pub fn from_snr_db(snr_db: f64, seed: u64) -> Self {
        Self {
            variance: 10f64.powf(-snr_db / 10.0),
            seed,
        }
    }
}

/// Run symbols through a combined channel: `y(n) = sum_l x(n-l) h_l + z(n)`.
///
/// `history` supplies the symbols transmitted before `x[0]` (most recent
/// last); lags older than the history provided are treated as silence. The
/// experiment harness always passes the full `M + L - 1` true prior symbols.
pub fn channel_output(
    x: &[Complex64],
    history: &[Complex64],
    channel: &CombinedChannel,
    noise: &NoiseSpec,
) -> Vec<Complex64> {
    let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
    for &idx in channel.support() {
        let h = channel.taps()[idx];
        for (n, yn) in y.iter_mut().enumerate() {
            let lagged = n as isize - idx as isize;
            let sym = if lagged >= 0 {
                x[lagged as usize]
            } else {
                let back = (-lagged) as usize; // 1-based steps into history
                if back <= history.len() {
                    history[history.len() - back]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            };
            *yn += h * sym;
        }
    }
    if noise.variance > 0.0 {
        let mut rng = rng_from_seed(noise.seed);
        let z = complex_gaussian(x.len(), noise.variance, &mut rng);
        for (yn, zn) in y.iter_mut().zip(z) {
            *yn += zn;
        }
    }
    y
}

/// Unit-energy Gray-mapped QPSK symbols, deterministic per seed.
pub fn generate_qpsk(count: usize, seed: u64) -> Vec<Complex64> {
    use rand::Rng;
    let mut rng = rng_from_seed(seed);
    let a = std::f64::consts::FRAC_1_SQRT_2;
    (0..count)
        .map(|_| {
            let bits: u8 = rng.gen_range(0..4);
            let re = if bits & 1 == 0 { a } else { -a };
            let im = if bits & 2 == 0 { a } else { -a };
            Complex64::new(re, im)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_seed;

    /// Independent oracle: evaluate `y(n) = sum_l x(n - boundary - l) h_l`
    /// directly from the short CIR and the boundary, never touching the
    /// combined-channel representation.
    fn direct_delayed_convolution(
        x: &[Complex64],
        history: &[Complex64],
        h: &Cir,
        boundary: usize,
    ) -> Vec<Complex64> {
        let fetch = |idx: isize| -> Complex64 {
            if idx >= 0 {
                x[idx as usize]
            } else {
                let back = (-idx) as usize;
                if back <= history.len() {
                    history[history.len() - back]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
        };
        (0..x.len())
            .map(|n| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (l, hl) in h.taps().iter().enumerate() {
                    acc += hl * fetch(n as isize - boundary as isize - l as isize);
                }
                acc
            })
            .collect()
    }

    #[test]
    fn training_len_identity_holds() {
        let cfg = FrameConfig::new(1000, 100, 148, 10).unwrap();
        assert_eq!(cfg.training_len(), 1247);
        assert_eq!(cfg.combined_len(), 1100);
        let cfg = FrameConfig::new(100, 5, 43, 10).unwrap();
        assert_eq!(cfg.training_len(), 147);
        assert_eq!(cfg.block_len(), 1047);
    }

    #[test]
    fn reference_channel_shape() {
        let h = reference_cir();
        assert_eq!(h.taps().len(), 101);
        assert_eq!(h.sparsity(), 10);
        assert_eq!(h.taps()[14], Complex64::new(0.9, 0.0));
        let hs = reference_cir_small();
        assert_eq!(hs.taps().len(), 21);
        assert_eq!(hs.sparsity(), 10);
    }

    #[test]
    fn combined_channel_embeds_at_offset() {
        let h = reference_cir();
        let combined = build_combined_channel(&h, 500, 1000).unwrap();
        assert_eq!(combined.len(), 1100);
        assert_eq!(
            combined.support(),
            &[500, 507, 514, 533, 549, 551, 569, 573, 589, 600]
        );
        assert_eq!(combined.boundary(), 500);
    }

    #[test]
    fn combined_channel_zero_delay_is_prefix() {
        let h = Cir::from_real(&[1.0, -0.25, 0.5]);
        let combined = build_combined_channel(&h, 0, 7).unwrap();
        assert_eq!(combined.len(), 9);
        assert_eq!(combined.taps()[..3], *h.taps());
        assert!(combined.taps()[3..].iter().all(|t| t.norm_sqr() == 0.0));
    }

    #[test]
    fn combined_channel_unit_tap_at_end() {
        let h = Cir::from_real(&[1.0]);
        let combined = build_combined_channel(&h, 2, 3).unwrap();
        let taps: Vec<f64> = combined.taps().iter().map(|t| t.re).collect();
        assert_eq!(taps, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn combined_channel_rejects_bad_boundary() {
        let h = Cir::from_real(&[1.0]);
        assert!(matches!(
            build_combined_channel(&h, 3, 3),
            Err(Error::BoundaryOutOfRange { .. })
        ));
    }

    #[test]
    fn combined_length_independent_of_boundary() {
        let h = reference_cir_small();
        for boundary in [0usize, 1, 17, 49, 99] {
            let combined = build_combined_channel(&h, boundary, 100).unwrap();
            assert_eq!(combined.len(), 120);
            assert_eq!(combined.support().len(), h.sparsity());
        }
    }

    #[test]
    fn impulse_probe_returns_channel() {
        let h = reference_cir_small();
        let combined = build_combined_channel(&h, 13, 100).unwrap();
        let mut x = vec![Complex64::new(0.0, 0.0); 120];
        x[0] = Complex64::new(1.0, 0.0);
        let y = channel_output(&x, &[], &combined, &NoiseSpec::noiseless(0));
        for (yn, hn) in y.iter().zip(combined.taps()) {
            assert!((yn - hn).norm() < 1e-15);
        }
    }

    #[test]
    fn channel_output_matches_direct_convolution_oracle() {
        let h = reference_cir_small();
        let boundary = 37;
        let m = 100;
        let combined = build_combined_channel(&h, boundary, m).unwrap();
        let x = generate_qpsk(300, derive_seed(11, &[0]));
        let history = generate_qpsk(combined.len() - 1, derive_seed(11, &[1]));
        let y = channel_output(&x, &history, &combined, &NoiseSpec::noiseless(0));
        let oracle = direct_delayed_convolution(&x, &history, &h, boundary);
        let max_dev = y
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-12, "max deviation {max_dev}");
    }

    #[test]
    fn noise_variance_calibrated_on_zero_channel() {
        let zero = CombinedChannel::from_taps(vec![Complex64::new(0.0, 0.0); 4], 0);
        let x = vec![Complex64::new(1.0, 0.0); 100_000];
        let noise = NoiseSpec::new(0.09, 99).unwrap();
        let y = channel_output(&x, &[], &zero, &noise);
        let var: f64 = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64;
        assert!((var - 0.09).abs() / 0.09 < 0.05, "sample variance {var}");
    }

    #[test]
    fn qpsk_has_unit_modulus_and_is_deterministic() {
        let a = generate_qpsk(4, 5);
        assert!(a.iter().all(|s| (s.norm() - 1.0).abs() < 1e-12));
        let b = generate_qpsk(4, 5);
        assert_eq!(a, b);
    }

    #[test]
    fn qpsk_constellation_is_balanced() {
        let syms = generate_qpsk(100_000, 1234);
        let mut counts = [0usize; 4];
        for s in &syms {
            let idx = (if s.re < 0.0 { 1 } else { 0 }) + (if s.im < 0.0 { 2 } else { 0 });
            counts[idx] += 1;
        }
        for c in counts {
            let freq = c as f64 / syms.len() as f64;
            assert!((freq - 0.25).abs() < 0.01, "frequency {freq}");
        }
    }

    #[test]
    fn delay_model_decomposition() {
        let d = DelayModel::from_total(3514, 1000);
        assert_eq!(d.frame, 3);
        assert_eq!(d.boundary, 514);
        assert_eq!(d.frame * 1000 + d.boundary, d.total);
    }
}
