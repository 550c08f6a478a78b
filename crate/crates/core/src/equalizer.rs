//! Sparse FIR linear MMSE equalizer designed from a combined-channel
//! estimate, plus the end-to-end symbol MSE metric.
//!
//! For unit-energy white symbols and white noise, the MSE of a length-`N`
//! equalizer `w` at decision delay `delta` is
//! `|| conv(w, h) - e_delta ||^2 + sigma^2 ||w||^2`, which the normal
//! equations `(R + sigma^2 I) w = p(delta)` minimize, with `R` the Hermitian
//! Toeplitz channel autocorrelation matrix and `p(delta)_k = conj(h_{delta-k})`.
//! Active taps are chosen by greedy forward selection on those normal
//! equations — each step adds the tap with the largest exact MSE reduction —
//! rather than by pruning the dense solution, so the design MSE is
//! non-increasing in the tap budget by construction.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::dot_conj;

/// A designed equalizer: `num_taps` total positions, at most `budget` of
/// them active.
#[derive(Debug, Clone)]
pub struct EqualizerDesign {
    /// Tap vector of length `num_taps`; zero outside the active set.
    pub taps: Vec<Complex64>,
    /// Sorted indices of the active taps.
    pub active: Vec<usize>,
    /// Decision delay `delta`.
    pub delay: usize,
    /// Model-predicted MSE at the chosen delay.
    pub design_mse: f64,
    pub num_taps: usize,
    /// Set when the normal matrix needed jitter regularization.
    pub jittered: bool,
}

/// Channel autocorrelation `rho(j) = sum_u conj(h_u) h_{u+j}` for
/// `j = 0..lags`.
fn autocorrelation(channel: &[Complex64], lags: usize) -> Vec<Complex64> {
    (0..lags)
        .map(|j| {
            let mut acc = Complex64::new(0.0, 0.0);
            for u in 0..channel.len().saturating_sub(j) {
                acc += channel[u].conj() * channel[u + j];
            }
            acc
        })
        .collect()
}

/// Workspace for greedy tap selection at one decision delay.
struct GreedySelector<'a> {
    rho: &'a [Complex64],
    noise_variance: f64,
    active: Vec<usize>,
    /// Cholesky rows of the active normal matrix (row s has s+1 entries).
    chol_rows: Vec<Vec<Complex64>>,
    /// `z = L^{-1} p_active`.
    z: Vec<Complex64>,
    /// Per-candidate `v_j = L^{-1} R[active, j]`, plus running norms and
    /// residual correlations.
    v: Vec<Vec<Complex64>>,
    v_norm_sqr: Vec<f64>,
    q: Vec<Complex64>,
    selected: Vec<bool>,
    mse: f64,
}

impl<'a> GreedySelector<'a> {
    fn new(rho: &'a [Complex64], noise_variance: f64, channel: &[Complex64], delta: usize, n: usize) -> Self {
        let p: Vec<Complex64> = (0..n)
            .map(|k| {
                if delta >= k && delta - k < channel.len() {
                    channel[delta - k].conj()
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        Self {
            rho,
            noise_variance,
            q: p,
            active: Vec::new(),
            chol_rows: Vec::new(),
            z: Vec::new(),
            v: vec![Vec::new(); n],
            v_norm_sqr: vec![0.0; n],
            selected: vec![false; n],
            mse: 1.0,
        }
    }

    #[inline]
    fn r_entry(&self, row: usize, col: usize) -> Complex64 {
        let base = if row >= col {
            self.rho[row - col]
        } else {
            self.rho[col - row].conj()
        };
        if row == col {
            base + self.noise_variance
        } else {
            base
        }
    }

    /// Add the best-scoring tap; returns false when no tap can improve.
    fn step(&mut self) -> bool {
        let n = self.selected.len();
        let d0 = self.rho[0].re + self.noise_variance;
        let floor = d0 * 1e-12;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if self.selected[j] {
                continue;
            }
            let s_j = d0 - self.v_norm_sqr[j];
            if s_j <= floor {
                continue;
            }
            let score = self.q[j].norm_sqr() / s_j;
            match best {
                Some((_, bs)) if bs >= score => {}
                _ => best = Some((j, score)),
            }
        }
        let Some((j, score)) = best else {
            return false;
        };
        if score <= 0.0 {
            return false;
        }

        let s_j = d0 - self.v_norm_sqr[j];
        let l_jj = s_j.sqrt();
        let v_j = self.v[j].clone();
        let z_new = self.q[j] / l_jj;

        // grow the Cholesky factor: row = [v_j^H, l_jj]
        let mut row: Vec<Complex64> = v_j.iter().map(|c| c.conj()).collect();
        row.push(Complex64::new(l_jj, 0.0));
        self.chol_rows.push(row);
        self.z.push(z_new);
        self.mse -= score;
        self.selected[j] = true;
        self.active.push(j);

        // extend every remaining candidate's forward-substitution state
        for jp in 0..n {
            if self.selected[jp] {
                continue;
            }
            let u = self.r_entry(j, jp);
            let cross = dot_conj(&v_j, &self.v[jp]);
            let v_new = (u - cross) / l_jj;
            self.v_norm_sqr[jp] += v_new.norm_sqr();
            self.q[jp] -= v_new.conj() * z_new;
            self.v[jp].push(v_new);
        }
        true
    }

    /// Solve for the active-tap weights at the current selection.
    fn solve(&self) -> Vec<Complex64> {
        // back substitution with L^H on z
        let s = self.active.len();
        let mut w = self.z.clone();
        for i in (0..s).rev() {
            let mut acc = w[i];
            for k in (i + 1)..s {
                acc -= self.chol_rows[k][i].conj() * w[k];
            }
            w[i] = acc / self.chol_rows[i][i];
        }
        w
    }

    fn design(&self, n: usize, delta: usize) -> EqualizerDesign {
        let w = self.solve();
        let mut taps = vec![Complex64::new(0.0, 0.0); n];
        let mut active = self.active.clone();
        for (&idx, &wi) in self.active.iter().zip(&w) {
            taps[idx] = wi;
        }
        active.sort_unstable();
        EqualizerDesign {
            taps,
            active,
            delay: delta,
            design_mse: self.mse.max(0.0),
            num_taps: n,
            jittered: false,
        }
    }
}

/// Solve the Hermitian Toeplitz system `T x = b` with the Levinson
/// recursion, `T[i][j] = r[j - i]` for `j >= i` (conjugate below). `r[0]`
/// must be real positive. Returns `None` when a reflection step collapses
/// (matrix not positive definite to working precision).
fn solve_toeplitz(r: &[Complex64], b: &[Complex64]) -> Option<Vec<Complex64>> {
    let n = r.len();
    debug_assert_eq!(b.len(), n);
    if r[0].re <= 0.0 {
        return None;
    }
    let mut fwd = vec![Complex64::new(1.0 / r[0].re, 0.0)];
    let mut x = vec![b[0] / r[0].re];
    for m in 1..n {
        // extension errors of the forward vector and the solution
        let mut eps_f = Complex64::new(0.0, 0.0);
        let mut eps_x = Complex64::new(0.0, 0.0);
        for i in 0..m {
            let t = r[m - i].conj(); // T[m][i]
            eps_f += t * fwd[i];
            eps_x += t * x[i];
        }
        let denom = 1.0 - eps_f.norm_sqr();
        if denom.abs() < 1e-14 {
            return None;
        }
        // backward vector is the conjugate reversal of the forward vector
        let mut fwd_new = Vec::with_capacity(m + 1);
        for i in 0..=m {
            let f_pad = if i < m { fwd[i] } else { Complex64::new(0.0, 0.0) };
            let b_pad = if i == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                fwd[m - i].conj()
            };
            fwd_new.push((f_pad - eps_f * b_pad) / denom);
        }
        fwd = fwd_new;
        x.push(Complex64::new(0.0, 0.0));
        let gain = b[m] - eps_x;
        for i in 0..=m {
            x[i] += gain * fwd[m - i].conj();
        }
    }
    Some(x)
}

/// Dense MMSE design at one delay through the Toeplitz solver; returns the
/// taps and the achieved MSE.
fn dense_design_for_delay(
    rho: &[Complex64],
    noise_variance: f64,
    channel: &[Complex64],
    delta: usize,
    n: usize,
) -> Option<(Vec<Complex64>, f64)> {
    // first row of R + sigma^2 I: R[0][j] = conj(rho(j))
    let mut first_row: Vec<Complex64> = rho.iter().map(|v| v.conj()).collect();
    first_row[0] += noise_variance;
    let p: Vec<Complex64> = (0..n)
        .map(|k| {
            if delta >= k && delta - k < channel.len() {
                channel[delta - k].conj()
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let w = solve_toeplitz(&first_row, &p)?;
    let mse = 1.0 - p.iter().zip(&w).map(|(pi, wi)| (pi.conj() * wi).re).sum::<f64>();
    Some((w, mse.max(0.0)))
}

/// Greedy sparse design at one fixed decision delay.
pub fn design_for_delay(
    channel: &[Complex64],
    num_taps: usize,
    noise_variance: f64,
    budget: usize,
    delta: usize,
) -> Result<EqualizerDesign> {
    validate_inputs(channel, num_taps, budget)?;
    let combined_len = num_taps + channel.len() - 1;
    if delta >= combined_len {
        return Err(Error::InvalidParameter(format!(
            "delay {delta} outside combined response of length {combined_len}"
        )));
    }
    let rho = autocorrelation(channel, num_taps);
    let mut sel = GreedySelector::new(&rho, noise_variance, channel, delta, num_taps);
    for _ in 0..budget {
        if !sel.step() {
            break;
        }
    }
    Ok(sel.design(num_taps, delta))
}

/// Candidate decision delays: everything when the channel is short, else a
/// window of width `num_taps` starting at the channel's center of energy.
fn delay_candidates(channel: &[Complex64], num_taps: usize) -> std::ops::Range<usize> {
    let combined_len = num_taps + channel.len() - 1;
    if channel.len() <= 500 {
        return 0..combined_len;
    }
    let energy: f64 = channel.iter().map(|c| c.norm_sqr()).sum();
    let center: f64 = channel
        .iter()
        .enumerate()
        .map(|(i, c)| i as f64 * c.norm_sqr())
        .sum::<f64>()
        / energy.max(1e-30);
    let lo = center.round() as usize;
    let hi = (lo + num_taps + 1).min(combined_len);
    lo.min(combined_len - 1)..hi
}

/// Full sparse MMSE design: greedy selection at every candidate delay, the
/// `(delta, active set, taps)` with the smallest design MSE wins (smallest
/// delay on ties). A full budget (`budget == num_taps`) routes through the
/// Levinson dense solver instead, which makes long dense equalizers cheap.
pub fn design_mmse_equalizer(
    channel: &[Complex64],
    num_taps: usize,
    noise_variance: f64,
    budget: usize,
) -> Result<EqualizerDesign> {
    validate_inputs(channel, num_taps, budget)?;
    if budget == num_taps {
        return dense_design(channel, num_taps, noise_variance);
    }
    let rho = autocorrelation(channel, num_taps);
    let mut best: Option<EqualizerDesign> = None;
    for delta in delay_candidates(channel, num_taps) {
        let mut sel = GreedySelector::new(&rho, noise_variance, channel, delta, num_taps);
        for _ in 0..budget {
            if !sel.step() {
                break;
            }
        }
        if best.as_ref().map_or(true, |b| sel.mse < b.design_mse - 1e-15) {
            best = Some(sel.design(num_taps, delta));
        }
    }
    best.ok_or_else(|| Error::InvalidParameter("no feasible decision delay".into()))
}

fn dense_design(channel: &[Complex64], num_taps: usize, noise_variance: f64) -> Result<EqualizerDesign> {
    let mut rho = autocorrelation(channel, num_taps);
    let candidates: Vec<usize> = delay_candidates(channel, num_taps).collect();
    let mut jittered = false;
    loop {
        let mut best: Option<(f64, usize, Vec<Complex64>)> = None;
        let probe = |delta: usize, best: &mut Option<(f64, usize, Vec<Complex64>)>| -> bool {
            match dense_design_for_delay(&rho, noise_variance, channel, delta, num_taps) {
                Some((w, mse)) => {
                    if best.as_ref().map_or(true, |(bm, _, _)| mse < bm - 1e-15) {
                        *best = Some((mse, delta, w));
                    }
                    true
                }
                None => false,
            }
        };
        let mut singular = false;
        if candidates.len() <= 64 {
            for &delta in &candidates {
                if !probe(delta, &mut best) {
                    singular = true;
                    break;
                }
            }
        } else {
            // coarse pass, then refine around the winner
            let stride = candidates.len() / 24;
            for &delta in candidates.iter().step_by(stride.max(1)) {
                if !probe(delta, &mut best) {
                    singular = true;
                    break;
                }
            }
            if let Some((_, coarse_delta, _)) = &best {
                let first = candidates[0];
                let last = *candidates.last().unwrap();
                let lo = coarse_delta.saturating_sub(stride).max(first);
                let hi = (coarse_delta + stride).min(last);
                let coarse_delta = *coarse_delta;
                for delta in lo..=hi {
                    if delta == coarse_delta {
                        continue;
                    }
                    if !probe(delta, &mut best) {
                        singular = true;
                        break;
                    }
                }
            }
        }
        if singular || best.is_none() {
            // not positive definite to working precision: add a ridge and flag
            if jittered {
                return Err(Error::IllConditioned {
                    condition: f64::INFINITY,
                });
            }
            let ridge = rho[0].re.abs().max(1e-12) * 1e-10;
            rho[0] += ridge;
            jittered = true;
            continue;
        }
        let (mse, delta, w) = best.unwrap();
        let active: Vec<usize> = (0..num_taps).collect();
        return Ok(EqualizerDesign {
            taps: w,
            active,
            delay: delta,
            design_mse: mse,
            num_taps,
            jittered,
        });
    }
}

/// Nested budget sweep: fix the delay at the full-budget optimum, then walk
/// one greedy path and snapshot the design at each requested budget. The
/// active sets are nested, so the reported MSE is non-increasing in the
/// budget by construction.
pub fn design_budget_sweep(
    channel: &[Complex64],
    num_taps: usize,
    noise_variance: f64,
    budgets: &[usize],
) -> Result<Vec<EqualizerDesign>> {
    validate_inputs(channel, num_taps, *budgets.iter().max().unwrap_or(&1))?;
    let full = design_mmse_equalizer(channel, num_taps, noise_variance, num_taps)?;
    let delta = full.delay;
    let rho = autocorrelation(channel, num_taps);
    let mut sel = GreedySelector::new(&rho, noise_variance, channel, delta, num_taps);
    let mut sorted: Vec<usize> = budgets.to_vec();
    sorted.sort_unstable();
    let mut out = Vec::with_capacity(budgets.len());
    let mut reached = 0usize;
    for &b in &sorted {
        while reached < b && sel.step() {
            reached += 1;
        }
        out.push(sel.design(num_taps, delta));
    }
    Ok(out)
}

fn validate_inputs(channel: &[Complex64], num_taps: usize, budget: usize) -> Result<()> {
    if num_taps == 0 {
        return Err(Error::InvalidParameter("equalizer needs at least one tap".into()));
    }
    if budget == 0 || budget > num_taps {
        return Err(Error::InvalidParameter(format!(
            "tap budget must lie in [1, {num_taps}], got {budget}"
        )));
    }
    if channel.is_empty() || channel.iter().all(|c| c.norm_sqr() == 0.0) {
        return Err(Error::InvalidParameter(
            "cannot design an equalizer for an all-zero channel".into(),
        ));
    }
    Ok(())
}

/// Run the equalizer over a received stream: output `n` is
/// `sum_k received[n - k] w_k`, defined for `n >= num_taps - 1`.
pub fn equalize(design: &EqualizerDesign, received: &[Complex64]) -> Vec<Complex64> {
    let n_taps = design.num_taps;
    if received.len() < n_taps {
        return Vec::new();
    }
    (n_taps - 1..received.len())
        .map(|n| {
            let mut acc = Complex64::new(0.0, 0.0);
            for &k in &design.active {
                acc += received[n - k] * design.taps[k];
            }
            acc
        })
        .collect()
}

/// Empirical symbol MSE: average of `|x_tilde(n) - x(n - delta)|^2` over
/// every index where both the equalizer output and the reference symbol
/// exist. `received` and `transmitted` share the same time origin.
pub fn evaluate_symbol_mse(
    design: &EqualizerDesign,
    received: &[Complex64],
    transmitted: &[Complex64],
) -> Result<f64> {
    let n_taps = design.num_taps;
    let start = (n_taps - 1).max(design.delay);
    let stop = received.len().min(transmitted.len() + design.delay);
    if start >= stop {
        return Err(Error::InsufficientSamples {
            needed: start + 1,
            got: stop,
        });
    }
    let mut acc = 0.0;
    for n in start..stop {
        let mut soft = Complex64::new(0.0, 0.0);
        for &k in &design.active {
            soft += received[n - k] * design.taps[k];
        }
        acc += (soft - transmitted[n - design.delay]).norm_sqr();
    }
    Ok(acc / (stop - start) as f64)
}

/// Decision device: nearest unit-energy QPSK point.
pub fn slice_qpsk(soft: &[Complex64]) -> Vec<Complex64> {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    soft.iter()
        .map(|s| {
            Complex64::new(
                if s.re >= 0.0 { a } else { -a },
                if s.im >= 0.0 { a } else { -a },
            )
        })
        .collect()
}
