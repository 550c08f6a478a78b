//! EM-tuned Gaussian-mixture approximate message passing.
//!
//! The coefficient prior is Bernoulli times a Gaussian mixture,
//! `p(h) = (1 - eta) delta(h) + eta sum_l w_l CN(h; mu_l, gamma_l)`, with an
//! i.i.d. Gaussian noise prior of variance `phi`. Posterior means and
//! variances are evaluated with the GAMP message-passing recursion; between
//! GAMP runs an EM pass refits every prior parameter
//! (`eta, w, mu, gamma, phi`) from the current posteriors. Damping keeps the
//! recursion stable on the structured (non-i.i.d.) training matrix, and a
//! divergence guard restarts with heavier damping if the residual blows up.

use std::time::Instant;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{norm2, norm2_sqr, CMat};
use crate::measurement::MeasurementSystem;

use super::{EstimateReport, Method, SolverFlag, SolverParams};

/// One Gaussian mixture component of the active-coefficient prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmComponent {
    pub weight: f64,
    pub mean: Complex64,
    pub variance: f64,
}

/// Bernoulli-Gaussian-mixture prior plus the noise-variance estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GmPrior {
    /// Probability that a coefficient is active.
    pub sparsity_rate: f64,
    pub components: Vec<GmComponent>,
    /// Noise variance estimate `phi`.
    pub noise_variance: f64,
}

impl GmPrior {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sparsity_rate) {
            return Err(Error::InvalidParameter(format!(
                "sparsity rate must lie in [0, 1], got {}",
                self.sparsity_rate
            )));
        }
        if self.components.is_empty() {
            return Err(Error::InvalidParameter("prior needs >= 1 mixture component".into()));
        }
        let wsum: f64 = self.components.iter().map(|c| c.weight).sum();
        if (wsum - 1.0).abs() > 1e-9 || self.components.iter().any(|c| c.weight < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mixture weights must be nonnegative and sum to 1, got {wsum}"
            )));
        }
        if self.components.iter().any(|c| !(c.variance > 0.0)) {
            return Err(Error::InvalidParameter("mixture variances must be positive".into()));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(Error::InvalidParameter("noise variance must be >= 0".into()));
        }
        Ok(())
    }

    /// Default initialization from the measurement dimensions: the sparsity
    /// rate inverts `NE = k log((M+L)/k)` (unit constant), the mixture is a
    /// three-scale zero-mean spread calibrated to the received energy.
    pub fn initialize(system: &MeasurementSystem, params: &SolverParams) -> GmPrior {
        let ne = system.matrix.rows();
        let n = system.matrix.cols();
        let k0 = invert_measurement_bound(ne, n);
        let eta = (k0 / n as f64).clamp(1.0 / n as f64, 0.95 * ne as f64 / n as f64);

        let y_power = norm2_sqr(&system.received) / ne as f64;
        let phi = if params.noise_variance > 0.0 {
            params.noise_variance
        } else {
            y_power / 101.0 // assume ~20 dB when nothing is known
        };
        let a_energy: f64 = (0..ne).map(|r| norm2_sqr(system.matrix.row(r))).sum();
        let signal_power = ((y_power * ne as f64 - ne as f64 * phi) / a_energy.max(1e-30))
            .max(1e-12)
            / eta;

        let scales = [0.5, 1.0, 2.0];
        let raw: f64 = scales.iter().sum::<f64>() / scales.len() as f64;
        let components = scales
            .iter()
            .map(|s| GmComponent {
                weight: 1.0 / scales.len() as f64,
                mean: Complex64::new(0.0, 0.0),
                variance: signal_power * s / raw,
            })
            .collect();
        GmPrior {
            sparsity_rate: eta,
            components,
            noise_variance: phi,
        }
    }
}

/// Smallest `k` with `k log(n/k) >= ne` has no closed form; bisect the
/// increasing part of `k log(n/k)`.
fn invert_measurement_bound(ne: usize, n: usize) -> f64 {
    let f = |k: f64| k * (n as f64 / k).ln();
    let mut lo = 1.0f64;
    let mut hi = (n as f64 / std::f64::consts::E).max(2.0); // argmax of f
    if f(hi) <= ne as f64 {
        return hi;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < ne as f64 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn emgmamp(system: &MeasurementSystem, params: &SolverParams) -> Result<EstimateReport> {
    let prior = GmPrior::initialize(system, params);
    emgmamp_with_prior(system, params, prior)
}

pub fn emgmamp_with_prior(
    system: &MeasurementSystem,
    params: &SolverParams,
    prior: GmPrior,
) -> Result<EstimateReport> {
    params.validate()?;
    prior.validate()?;
    let start = Instant::now();

    let mut state = GampState::new(system, prior);
    let mut damping = 0.7;
    let mut flags = Vec::new();
    let mut total_iters = 0usize;
    let inner_tol = (params.tol * 0.1).max(1e-12);
    let outer_cap = params.max_iter.max(1);
    let inner_cap = 30usize;

    let mut outer = 0usize;
    'outer: while outer < outer_cap {
        outer += 1;
        let mut inner = 0usize;
        loop {
            inner += 1;
            total_iters += 1;
            let change = state.iterate(damping);
            if state.diverged() {
                // restart the recursion with heavier damping
                if damping > 0.15 {
                    damping *= 0.5;
                    if !flags.contains(&SolverFlag::Redamped) {
                        flags.push(SolverFlag::Redamped);
                    }
                    state.reset_messages();
                    continue 'outer;
                } else {
                    flags.push(SolverFlag::Stagnated);
                    break 'outer;
                }
            }
            if change < inner_tol || inner >= inner_cap || total_iters >= 40 * outer_cap {
                break;
            }
        }
        let param_change = state.em_update(params.noise_variance > 0.0);
        if param_change < params.tol {
            break;
        }
    }
    if outer >= outer_cap {
        flags.push(SolverFlag::MaxIterations);
    }

    let mut report = EstimateReport::new(state.xhat.clone(), Method::Emgmamp);
    report.iterations = total_iters;
    report.flags = flags;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

struct GampState<'a> {
    a: &'a CMat,
    y: &'a [Complex64],
    prior: GmPrior,
    xhat: Vec<Complex64>,
    vx: Vec<f64>,
    shat: Vec<Complex64>,
    vs: Vec<f64>,
    // z-channel posteriors kept for the EM noise update
    zhat: Vec<Complex64>,
    vz: Vec<f64>,
    // responsibilities and component posteriors from the last denoiser pass
    resp_active: Vec<f64>,
    comp_resp: Vec<Vec<f64>>,
    comp_mean: Vec<Vec<Complex64>>,
    comp_var: Vec<Vec<f64>>,
    vr: Vec<f64>,
    rhat: Vec<Complex64>,
    y_norm: f64,
    residual: f64,
}

impl<'a> GampState<'a> {
    fn new(system: &'a MeasurementSystem, prior: GmPrior) -> Self {
        let n = system.matrix.cols();
        let ne = system.matrix.rows();
        let ncomp = prior.components.len();
        let mut s = Self {
            a: &system.matrix,
            y: &system.received,
            prior,
            xhat: vec![Complex64::new(0.0, 0.0); n],
            vx: vec![0.0; n],
            shat: vec![Complex64::new(0.0, 0.0); ne],
            vs: vec![0.0; ne],
            zhat: vec![Complex64::new(0.0, 0.0); ne],
            vz: vec![0.0; ne],
            resp_active: vec![0.0; n],
            comp_resp: vec![vec![0.0; n]; ncomp],
            comp_mean: vec![vec![Complex64::new(0.0, 0.0); n]; ncomp],
            comp_var: vec![vec![0.0; n]; ncomp],
            vr: vec![0.0; n],
            rhat: vec![Complex64::new(0.0, 0.0); n],
            y_norm: norm2(&system.received).max(1e-30),
            residual: 0.0,
        };
        s.reset_messages();
        s
    }

    fn reset_messages(&mut self) {
        let prior_mean: Complex64 = self
            .prior
            .components
            .iter()
            .map(|c| c.mean * c.weight)
            .sum::<Complex64>()
            * self.prior.sparsity_rate;
        let prior_second: f64 = self
            .prior
            .components
            .iter()
            .map(|c| c.weight * (c.variance + c.mean.norm_sqr()))
            .sum::<f64>()
            * self.prior.sparsity_rate;
        let prior_var = (prior_second - prior_mean.norm_sqr()).max(1e-12);
        for x in self.xhat.iter_mut() {
            *x = prior_mean;
        }
        for v in self.vx.iter_mut() {
            *v = prior_var;
        }
        for s in self.shat.iter_mut() {
            *s = Complex64::new(0.0, 0.0);
        }
        for v in self.vs.iter_mut() {
            *v = 0.0;
        }
        self.residual = self.y_norm;
    }

    fn diverged(&self) -> bool {
        !self.residual.is_finite() || self.residual > 5.0 * self.y_norm
    }

    /// One damped GAMP iteration; returns the relative change of the
    /// coefficient estimate.
    fn iterate(&mut self, damping: f64) -> f64 {
        let ne = self.a.rows();
        let n = self.a.cols();
        let phi = self.prior.noise_variance.max(1e-14 * self.y_norm * self.y_norm / ne as f64).max(1e-18);

        // output linear step: p = A xhat - vp .* shat, vp = |A|^2 vx
        let mut p = vec![Complex64::new(0.0, 0.0); ne];
        let mut vp = vec![0.0f64; ne];
        for r in 0..ne {
            let row = self.a.row(r);
            let mut acc = Complex64::new(0.0, 0.0);
            let mut vacc = 0.0;
            for (ai, (xi, vxi)) in row.iter().zip(self.xhat.iter().zip(&self.vx)) {
                acc += ai * xi;
                vacc += ai.norm_sqr() * vxi;
            }
            vp[r] = vacc.max(1e-18);
            p[r] = acc - vp[r] * self.shat[r];
        }

        // output nonlinear step (AWGN channel)
        for r in 0..ne {
            let denom = vp[r] + phi;
            self.vz[r] = vp[r] * phi / denom;
            self.zhat[r] = (phi * p[r] + vp[r] * self.y[r]) / denom;
            let s_new = (self.zhat[r] - p[r]) / vp[r];
            let vs_new = ((1.0 - self.vz[r] / vp[r]) / vp[r]).max(1e-18);
            self.shat[r] = damping * s_new + (1.0 - damping) * self.shat[r];
            self.vs[r] = damping * vs_new + (1.0 - damping) * self.vs[r];
        }

        // input linear step: r = xhat + vr .* (A^H shat), 1/vr = |A|^2' vs
        let mut vr_inv = vec![0.0f64; n];
        let mut corr = vec![Complex64::new(0.0, 0.0); n];
        for r in 0..ne {
            let row = self.a.row(r);
            let sr = self.shat[r];
            let vsr = self.vs[r];
            for ((ci, vi), ai) in corr.iter_mut().zip(vr_inv.iter_mut()).zip(row) {
                *ci += ai.conj() * sr;
                *vi += ai.norm_sqr() * vsr;
            }
        }
        for i in 0..n {
            self.vr[i] = 1.0 / vr_inv[i].max(1e-18);
            self.rhat[i] = self.xhat[i] + self.vr[i] * corr[i];
        }

        // input nonlinear step: posterior under the Bernoulli-GM prior
        let mut delta = 0.0f64;
        let mut scale = 0.0f64;
        let eta = self.prior.sparsity_rate.clamp(1e-12, 1.0 - 1e-12);
        let ncomp = self.prior.components.len();
        for i in 0..n {
            let r = self.rhat[i];
            let vr = self.vr[i];
            // log weights: spike then each component
            let mut logw = Vec::with_capacity(ncomp + 1);
            logw.push((1.0 - eta).ln() - (std::f64::consts::PI * vr).ln() - r.norm_sqr() / vr);
            for c in &self.prior.components {
                let v = c.variance + vr;
                logw.push(
                    eta.ln() + c.weight.max(1e-300).ln()
                        - (std::f64::consts::PI * v).ln()
                        - (r - c.mean).norm_sqr() / v,
                );
            }
            let max_lw = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for lw in logw.iter_mut() {
                *lw = (*lw - max_lw).exp();
                total += *lw;
            }
            let inv_total = 1.0 / total;

            let mut mean = Complex64::new(0.0, 0.0);
            let mut second = 0.0;
            let mut active = 0.0;
            for (l, c) in self.prior.components.iter().enumerate() {
                let pi_l = logw[l + 1] * inv_total;
                let q = c.variance * vr / (c.variance + vr);
                let nu = q * (c.mean / c.variance + r / vr);
                mean += pi_l * nu;
                second += pi_l * (nu.norm_sqr() + q);
                active += pi_l;
                self.comp_resp[l][i] = pi_l;
                self.comp_mean[l][i] = nu;
                self.comp_var[l][i] = q;
            }
            self.resp_active[i] = active;
            let var = (second - mean.norm_sqr()).max(1e-18);

            let x_new = damping * mean + (1.0 - damping) * self.xhat[i];
            let v_new = damping * var + (1.0 - damping) * self.vx[i];
            delta += (x_new - self.xhat[i]).norm_sqr();
            scale += x_new.norm_sqr();
            self.xhat[i] = x_new;
            self.vx[i] = v_new;
        }

        // residual for the divergence guard
        let fit = self.a.matvec(&self.xhat);
        self.residual = fit
            .iter()
            .zip(self.y)
            .map(|(f, yv)| (yv - f).norm_sqr())
            .sum::<f64>()
            .sqrt();

        (delta / scale.max(1e-30)).sqrt()
    }

    /// EM refit of every prior parameter from the current posteriors;
    /// returns the largest relative parameter change.
    fn em_update(&mut self, noise_known_init: bool) -> f64 {
        let n = self.a.cols();
        let ne = self.a.rows();
        let ncomp = self.prior.components.len();
        let _ = noise_known_init;

        let active_mass: f64 = self.resp_active.iter().sum();
        let eta_new = (active_mass / n as f64).clamp(1e-6, 1.0 - 1e-6);

        let mut max_rel = rel_change(eta_new, self.prior.sparsity_rate);
        self.prior.sparsity_rate = eta_new;

        let mut new_components = Vec::with_capacity(ncomp);
        for l in 0..ncomp {
            let mass: f64 = self.comp_resp[l].iter().sum();
            if mass < 1e-12 {
                new_components.push(self.prior.components[l]);
                continue;
            }
            let weight = (mass / active_mass.max(1e-30)).max(1e-8);
            let mean = self.comp_resp[l]
                .iter()
                .zip(&self.comp_mean[l])
                .map(|(b, nu)| b * nu)
                .sum::<Complex64>()
                / mass;
            let variance = self.comp_resp[l]
                .iter()
                .zip(self.comp_mean[l].iter().zip(&self.comp_var[l]))
                .map(|(b, (nu, q))| b * ((nu - mean).norm_sqr() + q))
                .sum::<f64>()
                / mass;
            let variance = variance.max(1e-14);
            let old = self.prior.components[l];
            max_rel = max_rel
                .max(rel_change(weight, old.weight))
                .max(rel_change(variance, old.variance))
                .max((mean - old.mean).norm() / old.variance.sqrt().max(1e-12));
            new_components.push(GmComponent {
                weight,
                mean,
                variance,
            });
        }
        let wsum: f64 = new_components.iter().map(|c| c.weight).sum();
        for c in new_components.iter_mut() {
            c.weight /= wsum;
        }
        self.prior.components = new_components;

        let phi_new = self
            .y
            .iter()
            .zip(self.zhat.iter().zip(&self.vz))
            .map(|(yv, (z, vz))| (yv - z).norm_sqr() + vz)
            .sum::<f64>()
            / ne as f64;
        let phi_new = phi_new.max(1e-14 * self.y_norm * self.y_norm / ne as f64).max(1e-18);
        max_rel = max_rel.max(rel_change(phi_new, self.prior.noise_variance));
        self.prior.noise_variance = phi_new;

        max_rel
    }
}

fn rel_change(new: f64, old: f64) -> f64 {
    (new - old).abs() / old.abs().max(1e-12)
}
